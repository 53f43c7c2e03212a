//! Subcommand bodies driven from in-memory configurations.

use std::fs;
use std::path::Path;

use cbf_core::harness::commands::{self, ControlApp, Format};
use cbf_core::harness::config::ExperimentConfig;
use cbf_core::harness::verify::{Scale, Suite};
use cbf_core::spectral::stokes_symbol;
use cbf_core::Error;

const DECAY: &str = r#"
seed = 1
[grid]
d = 2
n = 16
[params]
mu = 0.1
beta = 0.5
r = 1.0
[stepper]
dt = 1e-4
t_end = 0.1
lam = 1.0
scheme = "imex-explicit-phi"
record_every = 100
[initial]
kind = "shear"
amplitude = 1.0
k = 1
"#;

fn exp(text: &str) -> cbf_core::harness::config::Experiment {
    ExperimentConfig::from_toml(text).unwrap().materialize(Path::new(".")).unwrap()
}

#[test]
fn zero_config_writes_zero_trajectory() {
    let text = "[grid]\nd = 2\nn = 8\n[params]\nmu = 1.0\nbeta = 1.0\nr = 3.0\n[stepper]\ndt = 1e-3\nt_end = 1e-2\nlam = 1.0\n";
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    let traj = commands::simulate(&exp(text), dir.path(), Format::Csv, None, &mut sink).unwrap();
    assert!(traj.states.iter().all(|s| s.max_abs() == 0.0));
    let csv = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert!(cols.iter().all(|v| *v == 0.0), "{line}");
    }
    assert!(dir.path().join("summary.jsonl").exists());
    assert_eq!(fs::read_dir(dir.path().join("checkpoints")).unwrap().count(), 11);
}

#[test]
fn decay_config_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    let traj = commands::simulate(&exp(DECAY), dir.path(), Format::Jsonl, None, &mut sink).unwrap();
    let exact = (0.5f64).sqrt() * (-(0.1 * stokes_symbol(1.0) + 0.5) * 0.1).exp();
    let got = traj.norm_series.last().unwrap().h_norm;
    assert!((got - exact).abs() / exact <= 1e-3);
    let jsonl = fs::read_to_string(dir.path().join("samples.jsonl")).unwrap();
    for line in jsonl.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn explicit_scheme_with_large_step_is_rejected() {
    let err = ExperimentConfig::from_toml(&DECAY.replace("lam = 1.0", "lam = 1e-4")).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("[stepper]")), "{err}");
}

#[test]
fn invariance_with_huge_varpi_matches_plain_simulation() {
    let text = format!("{DECAY}\n[forcing]\nkind = \"constant\"\nfield = {{ kind = \"taylor-green\", amplitude = 5.0 }}\n[control]\nvarpi = 1e6\n");
    let e = exp(&text);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut sink = Vec::new();
    commands::simulate(&e, a.path(), Format::Csv, None, &mut sink).unwrap();
    assert!(commands::control(&e, ControlApp::Invariance, b.path(), Format::Csv, &mut sink).unwrap());
    let sa = fs::read_to_string(a.path().join("samples.csv")).unwrap();
    let sb = fs::read_to_string(b.path().join("samples.csv")).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn inadmissible_time_optimal_reports_admissibility() {
    let text = r#"
[grid]
d = 2
n = 8
[params]
mu = 1.0
beta = 1.0
r = 5.0
[stepper]
dt = 1e-3
t_end = 0.1
lam = 1e-6
[initial]
kind = "taylor-green"
amplitude = 0.5
[control]
kappa_c = 0.01
target = { kind = "shear", amplitude = 0.05, k = 1 }
"#;
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    let err = commands::control(&exp(text), ControlApp::TimeOptimal, dir.path(), Format::Csv, &mut sink).unwrap_err();
    assert!(err.to_string().contains("admissible"));
    let out = String::from_utf8(sink).unwrap();
    assert!(out.contains("\"control.time_optimal_admissibility\"") && out.contains("\"passed\":false"));
}

#[test]
fn time_optimal_requires_a_threshold_regime() {
    let text = DECAY.replace("r = 1.0", "r = 2.0");
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    assert!(commands::control(&exp(&text), ControlApp::TimeOptimal, dir.path(), Format::Csv, &mut sink).is_err());
}

#[test]
fn resolvent_with_zero_forcing_is_zero() {
    let text = DECAY.replace("[stepper]", "[potential]\nkind = \"enstrophy-indicator\"\nvarpi = 1.0\n[stepper]");
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    assert!(commands::resolvent(&exp(&text), dir.path(), &mut sink).unwrap());
    let (sol, _) = cbf_core::checkpoint::read(&dir.path().join("solution.cbf")).unwrap();
    assert_eq!(sol.max_abs(), 0.0);
}

#[test]
fn resolvent_sweep_emits_certificate() {
    let text = format!(
        "{}\n[forcing]\nkind = \"constant\"\nfield = {{ kind = \"random\", amplitude = 3.0, decay = 1.0 }}\n[resolvent]\nlevels = [0.5, 2.0, 4.0]\n",
        DECAY.replace("r = 1.0", "r = 2.0")
    );
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    assert!(commands::resolvent(&exp(&text), dir.path(), &mut sink).unwrap());
    let out = String::from_utf8(sink).unwrap();
    assert!(out.contains("resolvent.dequantization"));
}

#[test]
fn divergent_resolvent_reports_history() {
    let text = format!(
        "{}\n[forcing]\nkind = \"constant\"\nfield = {{ kind = \"random\", amplitude = 1e5, decay = 0.0 }}\n[tolerances]\nmax_iterations = 200\n",
        DECAY.replace("mu = 0.1", "mu = 0.01").replace("r = 1.0", "r = 2.0")
    );
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    let err = commands::resolvent(&exp(&text), dir.path(), &mut sink).unwrap_err();
    assert!(matches!(err, Error::NonConvergence { ref history, .. } if !history.is_empty()));
    assert!(String::from_utf8(sink).unwrap().contains("residual_history"));
}

#[test]
fn stabilize_at_equilibrium_is_zero() {
    let text = r#"
[grid]
d = 2
n = 8
[params]
mu = 0.5
beta = 1.0
r = 3.0
[stepper]
dt = 1e-3
t_end = 0.01
lam = 1e-6
[initial]
kind = "zero"
"#;
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Vec::new();
    assert!(commands::control(&exp(text), ControlApp::Stabilize, dir.path(), Format::Csv, &mut sink).unwrap());
    let csv = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.split(',').skip(2).all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn verify_is_deterministic_and_mutation_fails() {
    let run = |mutate: bool| {
        let mut sink = Vec::new();
        let ok = commands::verify(Suite::Nonlinear, 5, mutate, Scale::quick(), None, &mut sink).unwrap();
        (ok, sink)
    };
    let (ok, a) = run(false);
    assert!(ok);
    assert_eq!(a, run(false).1);
    let (ok, out) = run(true);
    assert!(!ok);
    let text = String::from_utf8(out).unwrap();
    let line = text.lines().find(|l| l.contains("nonlinear.forchheimer_lower_bound")).unwrap();
    assert!(line.contains("\"passed\":false"));
}

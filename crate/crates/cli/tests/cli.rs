//! End-to-end runs of the `cbf` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbf")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

const DECAY: &str = r#"
seed = 1
output_dir = "run"
[grid]
d = 2
n = 8
[params]
mu = 0.1
beta = 0.5
r = 1.0
[stepper]
dt = 1e-3
t_end = 0.05
lam = 1.0
scheme = "imex-explicit-phi"
record_every = 10
[initial]
kind = "shear"
amplitude = 1.0
k = 1
"#;

#[test]
fn simulate_writes_artifacts_next_to_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), DECAY);
    let out = cbf(&["simulate", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["samples.csv", "steps.csv", "summary.jsonl", "config.toml"] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let body = DECAY.replace("kind = \"shear\"\namplitude = 1.0\nk = 1", "kind = \"random\"\namplitude = 1.0\ndecay = 1.0");
    let cfg = write_config(tmp.path(), &body);
    let a = tmp.path().join("a").display().to_string();
    let b = tmp.path().join("b").display().to_string();
    assert!(cbf(&["simulate", "--config", &cfg, "--out", &a, "--seed", "4", "--format", "jsonl"]).status.success());
    assert!(cbf(&["simulate", "--config", &cfg, "--out", &b, "--seed", "4", "--format", "jsonl"]).status.success());
    for f in ["samples.jsonl", "steps.jsonl", "summary.jsonl", "checkpoints/step_0000000050.cbf"] {
        assert_eq!(fs::read(Path::new(&a).join(f)).unwrap(), fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_continues_from_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let half = write_config(tmp.path(), &DECAY.replace("t_end = 0.05", "t_end = 0.02"));
    let h = tmp.path().join("h").display().to_string();
    assert!(cbf(&["simulate", "--config", &half, "--out", &h]).status.success());
    let full = tmp.path().join("full.toml");
    fs::write(&full, DECAY).unwrap();
    let ck = Path::new(&h).join("checkpoints/step_0000000020.cbf").display().to_string();
    let r = tmp.path().join("r").display().to_string();
    let out = cbf(&["simulate", "--config", &full.display().to_string(), "--out", &r, "--resume", &ck]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(Path::new(&r).join("samples.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("20,"));
    assert!(csv.lines().last().unwrap().starts_with("50,"));
}

#[test]
fn bad_config_exits_with_field_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &DECAY.replace("lam = 1.0", "lam = 1e-4"));
    let out = cbf(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[stepper]"));
}

#[test]
fn verify_spectral_passes_and_unknown_suite_fails() {
    let out = cbf(&["verify", "--suite", "spectral"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.contains("\"passed\":true")));
    let bad = cbf(&["verify", "--suite", "nope"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn mutation_fails_the_nonlinear_suite() {
    let out = cbf(&["verify", "--suite", "nonlinear", "--mutate"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.contains("nonlinear.forchheimer_lower_bound")).unwrap();
    assert!(line.contains("\"passed\":false"));
}

#[test]
fn time_optimal_reports_hit_before_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
[grid]
d = 2
n = 8
[params]
mu = 1.0
beta = 1.0
r = 5.0
[stepper]
dt = 1e-3
t_end = 2.0
lam = 1e-6
[initial]
kind = "sum"
parts = [{ kind = "shear", amplitude = 0.01, k = 1 }, { kind = "taylor-green", amplitude = 0.4 }]
[control]
kappa_c = 1.0
target = { kind = "shear", amplitude = 0.01, k = 1 }
"#;
    let cfg = write_config(tmp.path(), body);
    let o = tmp.path().join("o").display().to_string();
    let out = cbf(&["control", "time-optimal", "--config", &cfg, "--out", &o]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let hit = report["hit_time"].as_f64().unwrap();
    let bound = report["extinction_bound"].as_f64().unwrap();
    assert!(hit <= bound);
}

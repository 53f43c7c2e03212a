//! Subcommand bodies. Each writes its artifacts under an output directory and
//! streams JSON lines to the supplied writer; the boolean result is the pass
//! status that decides the exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use super::config::Experiment;
use super::verify::{self, Scale, Suite, VerifyContext};
use crate::checkpoint::{self, Stamp};
use crate::control::{self, ControlledRunReport};
use crate::error::{Error, Result};
use crate::evolution::{self, Forcing, Trajectory};
use crate::field::SpectralField;
use crate::nonlinear::{quantization_factor, QuantizationLevel};
use crate::report::CheckReport;
use crate::spectral::enstrophy;
use crate::stationary::{self, AccretivityShift, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::Config(format!("unknown format `{other}`; expected csv or jsonl"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlApp {
    Invariance,
    TimeOptimal,
    Stabilize,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}")?;
    Ok(())
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

fn samples_jsonl(traj: &Trajectory) -> String {
    let mut s = String::new();
    for ((step, t), n) in traj.sample_steps.iter().zip(&traj.times).zip(&traj.norm_series) {
        s.push_str(&json_line(&json!({ "step": step, "time": t, "norms": n })));
        s.push('\n');
    }
    s
}

fn steps_jsonl(traj: &Trajectory) -> String {
    let mut s = String::new();
    for (i, l) in traj.ledger.iter().enumerate() {
        s.push_str(&json_line(&json!({
            "time": traj.step_times[i],
            "control_norm": traj.control_series[i],
            "potential_norm": traj.potential_series[i],
            "ledger": l,
        })));
        s.push('\n');
    }
    s
}

/// Sample and step series plus one checkpoint per sample.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            write_file(dir, "samples.csv", traj.samples_csv().as_bytes())?;
            write_file(dir, "steps.csv", traj.steps_csv().as_bytes())?;
        }
        Format::Jsonl => {
            write_file(dir, "samples.jsonl", samples_jsonl(traj).as_bytes())?;
            write_file(dir, "steps.jsonl", steps_jsonl(traj).as_bytes())?;
        }
    }
    let ckpt = dir.join("checkpoints");
    for ((state, step), t) in traj.states.iter().zip(&traj.sample_steps).zip(&traj.times) {
        let bytes = checkpoint::encode(state, Some(Stamp { time: *t, step: *step }));
        write_file(&ckpt, &format!("step_{step:010}.cbf"), &bytes)?;
    }
    Ok(())
}

/// Path of the checkpoint `write_trajectory` stores for a step.
pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("step_{step:010}.cbf"))
}

fn solver_options(exp: &Experiment) -> SolverOptions {
    SolverOptions {
        tol: exp.config.tolerances.stationary,
        max_iterations: exp.config.tolerances.max_iterations,
        ..Default::default()
    }
}

fn forcing_field(exp: &Experiment) -> SpectralField {
    match &exp.forcing {
        Forcing::None => SpectralField::zeros(&exp.grid),
        Forcing::Constant(f) | Forcing::Ramped { field: f, .. } => f.clone(),
    }
}

fn summary_line(kind: &str, traj: &Trajectory) -> String {
    let last = traj.norm_series.last();
    let worst = traj.ledger_residuals.iter().copied().fold(0.0, f64::max);
    json_line(&json!({
        "kind": kind,
        "samples": traj.times.len(),
        "steps": traj.ledger.len(),
        "final_time": traj.final_time(),
        "final_h_norm": last.map(|n| n.h_norm),
        "final_enstrophy": last.map(|n| n.enstrophy),
        "max_ledger_residual": worst,
        "fitted_c_scheme": if traj.dt > 0.0 { worst / traj.dt } else { 0.0 },
    }))
}

/// Plain evolution, optionally resumed from a stamped checkpoint.
pub fn simulate(exp: &Experiment, dir: &Path, format: Format, resume: Option<&Path>, sink: &mut dyn Write) -> Result<Trajectory> {
    let cfg = &exp.config.stepper;
    let traj = match resume {
        Some(path) => evolution::resume(path, &exp.forcing, &exp.params, &exp.potential, cfg)?,
        None => evolution::simulate(&exp.initial, &exp.forcing, &exp.params, &exp.potential, cfg)?,
    };
    write_file(dir, "config.toml", exp.config.to_toml().as_bytes())?;
    write_trajectory(dir, &traj, format)?;
    let estimate = evolution::higher_estimate_probe(&traj, &exp.params);
    let summary = format!("{}\n{}\n", summary_line("simulate", &traj), estimate.to_json_line());
    write_file(dir, "summary.jsonl", summary.as_bytes())?;
    sink.write_all(summary.as_bytes())?;
    Ok(traj)
}

/// Run a suite; every check goes to `sink` and to `verify.jsonl` when `dir` is given.
pub fn verify(suite: Suite, seed: u64, mutation: bool, scale: Scale, dir: Option<&Path>, sink: &mut dyn Write) -> Result<bool> {
    let ctx = VerifyContext {
        mutation,
        scale,
        ..VerifyContext::new(seed)
    };
    let reports = verify::run_suite(suite, &ctx);
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    if let Some(d) = dir {
        write_file(d, "verify.jsonl", text.as_bytes())?;
    }
    sink.write_all(text.as_bytes())?;
    Ok(reports.iter().all(|r| r.passed))
}

fn finish_control(report: &ControlledRunReport, dir: &Path, format: Format, sink: &mut dyn Write) -> Result<bool> {
    write_trajectory(dir, &report.trajectory, format)?;
    let mut text = report.to_json_line();
    text.push('\n');
    for c in &report.checks {
        text.push_str(&c.to_json_line());
        text.push('\n');
    }
    write_file(dir, "report.jsonl", text.as_bytes())?;
    sink.write_all(text.as_bytes())?;
    Ok(report.passed())
}

/// One of the three feedback applications.
pub fn control(exp: &Experiment, app: ControlApp, dir: &Path, format: Format, sink: &mut dyn Write) -> Result<bool> {
    let cfg = &exp.config.stepper;
    let tol = &exp.config.tolerances;
    let ctrl = exp.config.control.params();
    write_file(dir, "config.toml", exp.config.to_toml().as_bytes())?;
    match app {
        ControlApp::Invariance => {
            let report = control::run_invariance(&exp.initial, &exp.forcing, &exp.params, &ctrl, cfg, tol)?;
            finish_control(&report, dir, format, sink)
        }
        ControlApp::TimeOptimal => {
            exp.config.validate_time_optimal()?;
            let y1 = &exp.target;
            let admissible = control::time_optimal_admissibility(&exp.initial, y1, &exp.params, &ctrl)?;
            if !admissible.passed {
                let line = admissible.to_json_line();
                write_file(dir, "report.jsonl", format!("{line}\n").as_bytes())?;
                emit(sink, &line)?;
                return Err(Error::Config(format!(
                    "[control] time-optimal data are not admissible (margin {:.3e})",
                    admissible.margin
                )));
            }
            let report = control::run_time_optimal(&exp.initial, y1, &exp.params, &ctrl, cfg, tol, exp.config.control.comparison_c)?;
            finish_control(&report, dir, format, sink)
        }
        ControlApp::Stabilize => {
            let f_e = &exp.equilibrium_forcing;
            let y_e = if f_e.max_abs() == 0.0 {
                SpectralField::zeros(&exp.grid)
            } else {
                let steady = control::solve_steady_state(f_e, &exp.params, tol.stationary)?;
                emit(sink, &json_line(&json!({ "kind": "steady-state", "report": steady })))?;
                steady.solution().clone()
            };
            checkpoint::write(&dir.join("equilibrium.cbf"), &y_e, None)?;
            let report = control::run_stabilization(&exp.initial, &y_e, &exp.params, &ctrl, cfg, tol)?;
            finish_control(&report, dir, format, sink)
        }
    }
}

/// Regularized stationary solve with the configured potential, `lam` taken from the stepper,
/// the constant part of the forcing as right-hand side and an optional quantized sweep.
pub fn resolvent(exp: &Experiment, dir: &Path, sink: &mut dyn Write) -> Result<bool> {
    let rc = &exp.config.resolvent;
    let f = forcing_field(exp);
    let shift = AccretivityShift::new(rc.kappa, &exp.params)?;
    let opts = solver_options(exp);
    write_file(dir, "config.toml", exp.config.to_toml().as_bytes())?;
    let solved = stationary::solve_stationary(&f, &exp.params, &exp.potential, exp.config.stepper.lam, &shift, &opts);
    let report = match solved {
        Ok(r) => r,
        Err(Error::NonConvergence { iterations, residual, history }) => {
            let line = json_line(&json!({
                "kind": "resolvent",
                "converged": false,
                "iterations": iterations,
                "residual": residual,
                "residual_history": history,
            }));
            write_file(dir, "report.jsonl", format!("{line}\n").as_bytes())?;
            emit(sink, &line)?;
            return Err(Error::NonConvergence { iterations, residual, history });
        }
        Err(e) => return Err(e),
    };
    checkpoint::write(&dir.join("solution.cbf"), report.solution(), None)?;
    let mut lines = vec![json_line(&json!({ "kind": "resolvent", "converged": true, "shift": shift, "report": report }))];
    let mut passed = report.final_residual <= opts.tol;
    if !rc.levels.is_empty() {
        let none = crate::potential::PotentialSpec::None;
        let full = stationary::StationaryProblem {
            params: &exp.params,
            phi: &none,
            lam: 1.0,
            convection: stationary::Convection::Full,
            shift: rc.eta_n,
        }
        .solve(&f, &opts)?;
        let mut slacks = Vec::new();
        let mut cert = CheckReport::new("resolvent.dequantization", 0.0, 0.0, 0, "");
        for (i, &n) in rc.levels.iter().enumerate() {
            let level = QuantizationLevel::new(n)?;
            let q = stationary::quantized_stationary_solve(&f, &exp.params, level, &none, 1.0, rc.eta_n, &opts)?;
            let gap = (q.solution() - full.solution()).norm_h();
            let certified = n >= q.l4_norm;
            cert = cert
                .with_detail(&format!("level_{i}"), n)
                .with_detail(&format!("l4_{i}"), q.l4_norm)
                .with_detail(&format!("gap_{i}"), gap);
            if certified {
                let exact = quantization_factor(q.solution(), level) == 1.0;
                slacks.push(if exact { 10.0 * opts.tol - gap } else { -1.0 });
            }
        }
        let details = cert.details;
        let mut check = CheckReport::from_slacks(
            "resolvent.dequantization",
            slacks,
            0.0,
            "quantized solution equals the full one above the recorded L^4 norm",
        )
        .with_detail("l4_norm", full.l4_norm);
        check.details.extend(details);
        passed &= check.passed;
        lines.push(check.to_json_line());
    }
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    write_file(dir, "report.jsonl", text.as_bytes())?;
    sink.write_all(text.as_bytes())?;
    Ok(passed)
}

/// Equilibrium of the unregularized system driven by the constant part of the forcing,
/// or by `[control] equilibrium_forcing` when no forcing is configured.
pub fn steady_state(exp: &Experiment, dir: &Path, sink: &mut dyn Write) -> Result<bool> {
    let f = match exp.forcing {
        Forcing::None => exp.equilibrium_forcing.clone(),
        _ => forcing_field(exp),
    };
    let tol = exp.config.tolerances.stationary;
    let report = control::solve_steady_state(&f, &exp.params, tol)?;
    write_file(dir, "config.toml", exp.config.to_toml().as_bytes())?;
    checkpoint::write(&dir.join("steady.cbf"), report.solution(), None)?;
    let line = json_line(&json!({
        "kind": "steady-state",
        "enstrophy": enstrophy(report.solution()),
        "h_norm": report.solution().norm_h(),
        "report": report,
    }));
    write_file(dir, "report.jsonl", format!("{line}\n").as_bytes())?;
    emit(sink, &line)?;
    Ok(report.residual <= tol)
}

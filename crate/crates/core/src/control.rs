//! Feedback control of the CBF flow.
//!
//! - Flow invariance of the enstrophy ball `K = {||grad y|| <= varpi}`: on the
//!   boundary the control `U = -lam0 A y` cancels the enstrophy production.
//! - Time-optimal steering to a target `y1` with the sign feedback
//!   `U = -kappa sgn(y - y1)`, through its Yosida approximation.
//! - Stabilization of an equilibrium `y_e` with `theta z + dI_K(z)` acting on
//!   `z = y - y_e`.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::{integrate, Dynamics, Forcing, Scheme, StepperConfig, Trajectory};
use crate::field::SpectralField;
use crate::nonlinear::{self, forchheimer_unchecked, rho_threshold, FluidParams};
use crate::potential::{PotentialSpec, SignBranch};
use crate::report::CheckReport;
use crate::spectral::{enstrophy, ensure_div_free, stokes_apply};
use crate::stationary::{Convection, SolverOptions, StationaryProblem};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    /// Enstrophy bound for the invariance and stabilization problems.
    pub varpi: f64,
    /// Control magnitude bound for time-optimal steering.
    pub kappa_c: f64,
    /// Tikhonov gain for stabilization.
    pub theta: f64,
    /// Keep `beta` in front of `(C(y), A y)` in the cone multiplier.
    pub lam0_with_beta: bool,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            varpi: 1.0,
            kappa_c: 1.0,
            theta: 1.0,
            lam0_with_beta: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ControlledRunReport {
    pub application: String,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub control_norm_series: Vec<f64>,
    pub constraint_violation_max: f64,
    pub hit_time: Option<f64>,
    pub extinction_bound: Option<f64>,
    pub decay_rate: Option<f64>,
    /// Largest scaled closed-loop pairing `(dy/dt, A y)` over boundary steps.
    pub cancellation_max: Option<f64>,
    /// Steps on which the control was nonzero.
    pub active_steps: usize,
    pub checks: Vec<CheckReport>,
}

impl ControlledRunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Feedback value together with the closed-loop pairing it produces.
#[derive(Debug, Clone)]
pub struct FeedbackEvaluation {
    pub control: SpectralField,
    /// `(f - mu A y - B(y) - beta C(y) + U, A y)`.
    pub pairing: f64,
    /// Size of the largest term entering the pairing.
    pub scale: f64,
    pub on_boundary: bool,
}

/// Invariance feedback with its closed-loop pairing.
pub fn enstrophy_feedback_eval(
    y: &SpectralField,
    f: Option<&SpectralField>,
    params: &FluidParams,
    ctrl: &ControlParams,
    band: f64,
) -> Result<FeedbackEvaluation> {
    let varpi = ctrl.varpi;
    if !(varpi > 0.0) {
        return Err(invalid("varpi", format!("must be positive, got {varpi}")));
    }
    let y = ensure_div_free(y);
    let e = enstrophy(&y);
    if e > varpi * (1.0 + band) {
        return Err(Error::OutsideConstraint { enstrophy: e, bound: varpi });
    }
    if e < varpi * (1.0 - band) {
        return Ok(FeedbackEvaluation {
            control: SpectralField::zeros(y.grid()),
            pairing: 0.0,
            scale: 0.0,
            on_boundary: false,
        });
    }
    let ay = stokes_apply(&y);
    let ay2 = ay.norm_sqr_h();
    if ay2 == 0.0 {
        return Err(invalid("y", "A y vanishes on the boundary branch"));
    }
    let b = nonlinear::convective(&y);
    let c = forchheimer_unchecked(&y, params.r);
    let fa = f.map_or(0.0, |f| f.inner(&ay));
    let ba = b.inner(&ay);
    let ca = c.inner(&ay);
    let cb = if ctrl.lam0_with_beta { params.beta } else { 1.0 };
    let bracket = fa - params.mu * ay2 - ba - cb * ca;
    let control = ay.scale(-bracket / ay2);
    // Evaluate the closed loop with the dynamics' own beta.
    let pairing = fa - params.mu * ay2 - ba - params.beta * ca + control.inner(&ay);
    let scale = [fa.abs(), params.mu * ay2, ba.abs(), (params.beta * ca).abs()].into_iter().fold(0.0, f64::max);
    Ok(FeedbackEvaluation {
        control,
        pairing,
        scale,
        on_boundary: true,
    })
}

/// `U = -(A y / ||A y||^2) [(f, A y) - mu ||A y||^2 - b(y, y, A y) - beta (C(y), A y)]` on the
/// boundary band of `K`, zero strictly inside.
pub fn enstrophy_feedback(y: &SpectralField, f: &SpectralField, params: &FluidParams, ctrl: &ControlParams) -> Result<SpectralField> {
    Ok(enstrophy_feedback_eval(y, Some(f), params, ctrl, Tolerances::default().boundary_band)?.control)
}

/// Closed-loop run with the invariance feedback and a safety projection onto `K`.
pub fn run_invariance(
    y0: &SpectralField,
    forcing: &Forcing,
    params: &FluidParams,
    ctrl: &ControlParams,
    cfg: &StepperConfig,
    tol: &Tolerances,
) -> Result<ControlledRunReport> {
    let e0 = enstrophy(y0);
    if e0 > ctrl.varpi {
        return Err(Error::OutsideConstraint { enstrophy: e0, bound: ctrl.varpi });
    }
    let cancellation = Mutex::new(Vec::<f64>::new());
    let band = tol.boundary_band;
    let law = |y: &SpectralField, t: f64| -> Result<SpectralField> {
        let f = forcing.at(t);
        let ev = enstrophy_feedback_eval(y, f.as_deref(), params, ctrl, band)?;
        if ev.on_boundary {
            cancellation.lock().expect("single writer").push(ev.pairing.abs() / ev.scale.max(1.0));
        }
        Ok(ev.control)
    };
    let phi = PotentialSpec::None;
    let mut dynamics = Dynamics::new(params, &phi, forcing);
    dynamics.feedback = Some(&law);
    dynamics.safety_varpi = Some(ctrl.varpi);
    dynamics.blowup_norm = tol.blowup_norm;
    let mut violation: f64 = 0.0;
    let mut active = 0;
    let trajectory = integrate(&dynamics, y0, 0, cfg, |_, _, out| {
        violation = violation.max(enstrophy(&out.next) / ctrl.varpi - 1.0);
        if out.control_norm > 0.0 {
            active += 1;
        }
        true
    })?;
    let violation = violation.max(0.0);
    let cancel = cancellation.into_inner().expect("no poisoning");
    let cancellation_max = cancel.iter().copied().fold(0.0, f64::max);
    let checks = vec![
        CheckReport::new(
            "control.invariance",
            tol.invariance - violation,
            0.0,
            trajectory.ledger.len(),
            "invariance of the enstrophy ball under feedback",
        )
        .with_detail("violation_max", violation),
        CheckReport::new(
            "control.enstrophy_cancellation",
            1e-10 - cancellation_max,
            0.0,
            cancel.len(),
            "closed-loop pairing with A y vanishes on the boundary",
        )
        .with_detail("cancellation_max", cancellation_max),
    ];
    Ok(ControlledRunReport {
        application: "invariance".into(),
        control_norm_series: trajectory.control_series.clone(),
        trajectory,
        constraint_violation_max: violation,
        cancellation_max: Some(cancellation_max),
        active_steps: active,
        checks,
        ..Default::default()
    })
}

/// `mu A y1 + B(y1) + beta C(y1)`.
pub fn target_drift(y1: &SpectralField, params: &FluidParams) -> SpectralField {
    let y1 = ensure_div_free(y1);
    let lin = stokes_apply(&y1).scale(params.mu);
    let b = nonlinear::convective(&y1);
    let c = forchheimer_unchecked(&y1, params.r);
    (&lin + &b).axpy(params.beta, &c)
}

/// `T* = ln(eta / (eta - rho ||z0||)) / rho`, or `||z0|| / eta` when `rho = 0`.
pub fn extinction_bound(rho: f64, eta: f64, z0: f64) -> f64 {
    if z0 == 0.0 {
        return 0.0;
    }
    if rho == 0.0 {
        return z0 / eta;
    }
    let gap = eta - rho * z0;
    if gap <= 0.0 {
        return f64::INFINITY;
    }
    (eta / gap).ln() / rho
}

/// Both admissibility conditions for steering `y0` to `y1` with controls bounded by `kappa`.
///
/// Details carry `eta`, `rho`, the admissible radius `eta / rho` and `||y0 - y1||`.
pub fn time_optimal_admissibility(y0: &SpectralField, y1: &SpectralField, params: &FluidParams, ctrl: &ControlParams) -> Result<CheckReport> {
    let rho = rho_threshold(params)?;
    let drift = target_drift(y1, params).norm_h();
    let eta = ctrl.kappa_c - drift;
    let z0 = (&ensure_div_free(y0) - &ensure_div_free(y1)).norm_h();
    let radius = if rho > 0.0 { eta / rho } else { f64::INFINITY };
    let margin = if eta > 0.0 { (radius - z0).min(eta) } else { eta.min(-f64::MIN_POSITIVE) };
    Ok(CheckReport::new("control.time_optimal_admissibility", margin, 0.0, 1, "admissibility of time-optimal steering")
        .with_detail("eta", eta)
        .with_detail("rho", rho)
        .with_detail("radius", radius)
        .with_detail("z0_norm", z0)
        .with_detail("target_drift", drift))
}

/// Steer `y0` to `y1` with `U = -Theta_lam(y - y1)` and `f = 0`.
///
/// The comparison inequality `d||z||/dt + eta <= rho ||z||` is checked on every
/// step that starts with `||z|| > dt kappa` and ends with `||z|| > lam max(1, kappa)`.
/// Its `O(dt)` defect is allowed up to `comparison_c * dt`.
pub fn run_time_optimal(
    y0: &SpectralField,
    y1: &SpectralField,
    params: &FluidParams,
    ctrl: &ControlParams,
    cfg: &StepperConfig,
    tol: &Tolerances,
    comparison_c: f64,
) -> Result<ControlledRunReport> {
    let admissible = time_optimal_admissibility(y0, y1, params, ctrl)?;
    if !admissible.passed {
        return Err(invalid("y0", format!("inadmissible pair: {}", admissible.to_json_line())));
    }
    let eta = admissible.details["eta"];
    let rho = admissible.details["rho"];
    let z0 = admissible.details["z0_norm"];
    let bound = extinction_bound(rho, eta, z0);
    let target = ensure_div_free(y1);
    let phi = PotentialSpec::SignBall {
        kappa_c: ctrl.kappa_c,
        target: target.clone(),
        branch: SignBranch::Proximal,
    };
    let forcing = Forcing::None;
    let mut dynamics = Dynamics::new(params, &phi, &forcing);
    dynamics.blowup_norm = tol.blowup_norm;
    let dt = cfg.dt;
    let mut hit_time = if z0 <= tol.hit { Some(0.0) } else { None };
    let mut closest = (z0, 0.0);
    let mut slacks = Vec::new();
    let mut fitted: f64 = 0.0;
    let mut magnitude_slack = f64::INFINITY;
    let trajectory = if hit_time.is_some() {
        integrate(&dynamics, y0, 0, &StepperConfig { t_end: 0.0, ..*cfg }, |_, _, _| true)?
    } else {
        integrate(&dynamics, y0, 0, cfg, |step, y, out| {
            let before = (y - &target).norm_h();
            let after = (&out.next - &target).norm_h();
            magnitude_slack = magnitude_slack.min(ctrl.kappa_c * (1.0 + 1e-12) - out.control_norm);
            if before > dt * ctrl.kappa_c && after > cfg.lam * ctrl.kappa_c.max(1.0) {
                let v = (after - before) / dt + eta - rho * before;
                fitted = fitted.max(v / dt);
                slacks.push(comparison_c * dt - v);
            }
            let t = step as f64 * dt;
            if after < closest.0 {
                closest = (after, t);
            }
            if after <= tol.hit {
                hit_time = Some(t);
                return false;
            }
            true
        })?
    };
    let hit = hit_time.ok_or(Error::TargetMissed {
        closest: closest.0,
        time: closest.1,
    })?;
    let checks = vec![
        admissible,
        CheckReport::new(
            "control.extinction_time",
            bound * (1.0 + tol.extinction_slack) - hit,
            0.0,
            1,
            "finite extinction within the comparison bound",
        )
        .with_detail("hit_time", hit)
        .with_detail("extinction_bound", bound),
        CheckReport::from_slacks("control.comparison_inequality", slacks, 0.0, "differential inequality for ||y - y1||")
            .with_detail("fitted_c", fitted)
            .with_detail("allowed_c", comparison_c),
        CheckReport::new(
            "control.magnitude",
            if magnitude_slack.is_finite() { magnitude_slack } else { 0.0 },
            0.0,
            trajectory.control_series.len(),
            "control bounded by kappa",
        ),
    ];
    Ok(ControlledRunReport {
        application: "time-optimal".into(),
        control_norm_series: trajectory.control_series.clone(),
        active_steps: trajectory.control_series.iter().filter(|c| **c > 0.0).count(),
        trajectory,
        hit_time: Some(hit),
        extinction_bound: Some(bound),
        checks,
        ..Default::default()
    })
}

/// Result of the equilibrium solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyStateReport {
    #[serde(skip)]
    pub solution: Option<SpectralField>,
    pub residual: f64,
    pub outer_iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_shift: f64,
}

impl SteadyStateReport {
    pub fn solution(&self) -> &SpectralField {
        self.solution.as_ref().expect("report carries its solution")
    }
}

/// Solve `mu A y + B(y) + beta C(y) = f_e` by proximal-point continuation.
///
/// Each outer step solves `mu A y + B(y) + beta C(y) + s y = f_e + s y_prev` by
/// damped Picard. The shift `s` halves after every successful inner solve and
/// doubles after a failed one.
pub fn solve_steady_state(f_e: &SpectralField, params: &FluidParams, tol: f64) -> Result<SteadyStateReport> {
    let f = ensure_div_free(f_e);
    let phi = PotentialSpec::None;
    let plain = StationaryProblem {
        params,
        phi: &phi,
        lam: 1.0,
        convection: Convection::Full,
        shift: 0.0,
    };
    let mut y = SpectralField::zeros(f.grid());
    let mut res = plain.residual(&y, &f)?;
    let mut history = vec![res];
    let mut shift: f64 = 1.0;
    let mut outer = 0;
    let opts = SolverOptions {
        tol: 0.1 * tol,
        ..Default::default()
    };
    while res > tol {
        if outer >= 500 || shift > 1e8 {
            return Err(Error::NonConvergence {
                iterations: outer,
                residual: res,
                history,
            });
        }
        outer += 1;
        let problem = StationaryProblem { shift, ..plain.clone() };
        let rhs = f.axpy(shift, &y);
        match problem.solve_from(&rhs, &y, &opts) {
            Ok(rep) => {
                y = rep.solution().clone();
                res = plain.residual(&y, &f)?;
                history.push(res);
                shift = (shift / 2.0).max(1e-6);
            }
            Err(Error::NonConvergence { .. }) => shift *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Ok(SteadyStateReport {
        solution: Some(y),
        residual: res,
        outer_iterations: outer,
        residual_history: history,
        final_shift: shift,
    })
}

/// Exponential rate fitted to `||z(t)||` by least squares on `ln ||z||`.
///
/// Samples below `floor` relative to the first one are dropped.
pub fn fit_decay_rate(times: &[f64], norms: &[f64], floor: f64) -> Option<f64> {
    let first = *norms.first()?;
    if !(first > 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(_, n)| **n > floor * first)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Closed loop `dz/dt + mu A z + B~(z) + beta C~(z) + theta z + dI_K(z) = 0` around `y_e`.
pub fn run_stabilization(
    y0: &SpectralField,
    y_e: &SpectralField,
    params: &FluidParams,
    ctrl: &ControlParams,
    cfg: &StepperConfig,
    tol: &Tolerances,
) -> Result<ControlledRunReport> {
    let y_e = ensure_div_free(y_e);
    let z0 = &ensure_div_free(y0) - &y_e;
    let e0 = enstrophy(&z0);
    if e0 > ctrl.varpi {
        return Err(Error::OutsideConstraint { enstrophy: e0, bound: ctrl.varpi });
    }
    let phi = PotentialSpec::TikhonovIndicator {
        theta: ctrl.theta,
        varpi: ctrl.varpi,
    };
    let forcing = Forcing::None;
    let mut dynamics = Dynamics::new(params, &phi, &forcing);
    dynamics.base = Some(&y_e);
    dynamics.blowup_norm = tol.blowup_norm;
    let mut violation: f64 = 0.0;
    let cfg = StepperConfig {
        scheme: Scheme::SemiImplicitPhi,
        ..*cfg
    };
    let trajectory = integrate(&dynamics, &z0, 0, &cfg, |_, _, out| {
        violation = violation.max(enstrophy(&out.next) / ctrl.varpi - 1.0);
        true
    })?;
    let violation = violation.max(0.0);
    let norms: Vec<f64> = trajectory.norm_series.iter().map(|n| n.h_norm).collect();
    let decay_rate = fit_decay_rate(&trajectory.times, &norms, 1e-12);
    let threshold = rho_threshold(params).unwrap_or(f64::NAN);
    let mut checks = vec![CheckReport::new(
        "control.stabilization_invariance",
        tol.invariance - violation,
        0.0,
        trajectory.ledger.len(),
        "invariance of K for the shifted closed loop",
    )
    .with_detail("violation_max", violation)];
    if let Some(rate) = decay_rate {
        checks.push(
            CheckReport::new("control.stabilization_decay", rate, 0.0, norms.len(), "decay of ||y - y_e||")
                .with_detail("decay_rate", rate)
                .with_detail("theta", ctrl.theta)
                .with_detail("theta_threshold", threshold),
        );
        if let Some(c) = checks.last_mut() {
            c.passed = rate > 0.0;
        }
    }
    Ok(ControlledRunReport {
        application: "stabilize".into(),
        control_norm_series: trajectory.control_series.clone(),
        active_steps: trajectory.control_series.iter().filter(|c| **c > 0.0).count(),
        trajectory,
        constraint_violation_max: violation,
        decay_rate,
        checks,
        ..Default::default()
    })
}

/// Linear modal rate `mu (2 pi |k|)^2 + beta + theta` of a single mode.
pub fn modal_decay_rate(params: &FluidParams, theta: f64, k2: f64) -> f64 {
    params.mu * crate::spectral::stokes_symbol(k2) + params.beta + theta
}

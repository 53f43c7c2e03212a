//! Time integration of
//! `dy/dt + mu A y + B(y) + beta C(y) + Phi_lam(y) = f`.
//!
//! One step with time step `h`:
//!
//! ```text
//! y_hat = E_h (y + h (f - B(y) - beta C(y) [+ U(y)] [- Phi_lam(y)]))
//! y'    = y_hat                          (explicit Phi)
//! y'    = y_hat - h Phi_{lam+h}(y_hat)   (implicit Phi)
//! ```
//!
//! with `E_h = exp(-mu (2 pi |k|)^2 h)` applied mode by mode and a final Leray
//! projection. The implicit variant is the backward Euler step for `Phi_lam`,
//! since `(I + h Phi_lam)^-1 = I - h Phi_{lam+h}`; it returns `y'` with
//! `y' = y_hat - h Phi_lam(y')`.
//!
//! Each step records an [`EnergyLedger`] at the left endpoint. The potential
//! and control terms enter the ledger as the values actually applied.

use std::borrow::Cow;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Stamp};
use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;
use crate::nonlinear::{self, forchheimer_unchecked, quantized_convective, FluidParams};
use crate::potential::{project_enstrophy_ball, yosida, PotentialSpec};
use crate::report::CheckReport;
use crate::spectral::{enstrophy, enstrophy_sq, ensure_div_free, leray_project, lp_norm_padded, norms, stokes_norm_sq, stokes_symbol, NormReport};
use crate::stationary::Convection;

/// How `Phi_lam` enters a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[serde(rename = "imex-explicit-phi")]
    ExplicitPhi,
    #[default]
    #[serde(rename = "imex-semi-implicit-phi")]
    SemiImplicitPhi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    pub lam: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl StepperConfig {
    pub fn new(dt: f64, t_end: f64, lam: f64, scheme: Scheme) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            lam,
            scheme,
            record_every: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.lam > 0.0 && self.lam.is_finite()) {
            return Err(invalid("lam", format!("must be positive, got {}", self.lam)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if self.scheme == Scheme::ExplicitPhi && self.dt > self.lam / 2.0 {
            return Err(invalid(
                "dt",
                format!("explicit Phi needs dt <= lam/2, got dt = {} and lam = {}", self.dt, self.lam),
            ));
        }
        Ok(())
    }

    /// Total number of steps to reach `t_end`.
    pub fn steps(&self) -> u64 {
        let raw = self.t_end / self.dt;
        let rounded = raw.round();
        if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded as u64
        } else {
            raw.ceil() as u64
        }
    }
}

/// Right-hand side `f(t)`.
#[derive(Debug, Clone, Default)]
pub enum Forcing {
    #[default]
    None,
    Constant(SpectralField),
    /// `min(t / ramp_time, 1) * field`.
    Ramped { field: SpectralField, ramp_time: f64 },
}

impl Forcing {
    pub fn at(&self, t: f64) -> Option<Cow<'_, SpectralField>> {
        match self {
            Self::None => None,
            Self::Constant(f) => Some(Cow::Borrowed(f)),
            Self::Ramped { field, ramp_time } => {
                let s = if *ramp_time > 0.0 { (t / ramp_time).min(1.0) } else { 1.0 };
                Some(Cow::Owned(field.scale(s)))
            }
        }
    }
}

/// Feedback law `U(y, t)` added to the right-hand side.
pub type Feedback<'a> = &'a (dyn Fn(&SpectralField, f64) -> Result<SpectralField> + Sync);

/// The full closed-loop vector field.
#[derive(Clone)]
pub struct Dynamics<'a> {
    pub params: &'a FluidParams,
    pub phi: &'a PotentialSpec,
    pub forcing: &'a Forcing,
    pub convection: Convection,
    /// Equilibrium `y_e` for the shifted system in `z = y - y_e`:
    /// `B(z + y_e) - B(y_e)` and `C(z + y_e) - C(y_e)` replace `B` and `C`.
    pub base: Option<&'a SpectralField>,
    pub feedback: Option<Feedback<'a>>,
    /// Project back onto the enstrophy ball of this radius after each step.
    pub safety_varpi: Option<f64>,
    pub blowup_norm: f64,
}

impl<'a> Dynamics<'a> {
    pub fn new(params: &'a FluidParams, phi: &'a PotentialSpec, forcing: &'a Forcing) -> Self {
        Self {
            params,
            phi,
            forcing,
            convection: Convection::Full,
            base: None,
            feedback: None,
            safety_varpi: None,
            blowup_norm: 1e12,
        }
    }

    fn convect(&self, y: &SpectralField) -> SpectralField {
        match self.convection {
            Convection::Full => nonlinear::convective(y),
            Convection::Quantized(level) => quantized_convective(y, level),
        }
    }

    /// `(B(y), C(y))`, shifted by the base state when present.
    fn drift_terms(&self, y: &SpectralField) -> (SpectralField, SpectralField) {
        let r = self.params.r;
        match self.base {
            None => (self.convect(y), forchheimer_unchecked(y, r)),
            Some(e) => {
                let full = y + e;
                (
                    &self.convect(&full) - &self.convect(e),
                    &forchheimer_unchecked(&full, r) - &forchheimer_unchecked(e, r),
                )
            }
        }
    }
}

/// Terms of the energy balance `d/dt ||y||^2/2 + mu ||grad y||^2 + beta (C(y), y) + (Phi, y) = (f + U, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub kinetic: f64,
    pub dissipation: f64,
    pub absorption: f64,
    /// `(B(y), y)`; zero for the unshifted system.
    pub convective_pairing: f64,
    pub potential_pairing: f64,
    pub forcing_pairing: f64,
    pub step_residual: f64,
    /// `||grad y||^2`.
    pub enstrophy_sq: f64,
    /// `||A y||^2`.
    pub stokes_sq: f64,
    /// `||f - B(y) - beta C(y)||^2`.
    pub drift_sq: f64,
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: SpectralField,
    /// Left-endpoint ledger; `step_residual` needs the next kinetic energy and is filled here.
    pub ledger: EnergyLedger,
    /// H-norm of the applied `Phi` or feedback.
    pub control_norm: f64,
    pub potential_norm: f64,
}

/// Precomputed integrating factor for a grid and step.
struct Propagator {
    factors: Vec<f64>,
}

impl Propagator {
    fn new(y: &SpectralField, mu: f64, dt: f64) -> Self {
        Self {
            factors: y.grid().modes().iter().map(|m| (-mu * stokes_symbol(m.k2) * dt).exp()).collect(),
        }
    }

    fn apply(&self, y: &mut SpectralField) {
        let len = self.factors.len();
        for (i, c) in y.coeffs_mut().iter_mut().enumerate() {
            *c *= self.factors[i % len];
        }
    }
}

fn step_inner(dynamics: &Dynamics, prop: &Propagator, y: &SpectralField, t: f64, cfg: &StepperConfig) -> Result<StepOutcome> {
    let dt = cfg.dt;
    let params = dynamics.params;
    let (b, c) = dynamics.drift_terms(y);
    let mut rhs = b.axpy(params.beta, &c).scale(-1.0);
    let forcing = dynamics.forcing.at(t);
    if let Some(f) = &forcing {
        rhs = &rhs + f;
    }
    let drift_sq = rhs.norm_sqr_h();
    let mut forcing_pairing = forcing.as_ref().map_or(0.0, |f| f.inner(y));
    let mut control_norm = 0.0;
    if let Some(u_of) = dynamics.feedback {
        let u = u_of(y, t)?;
        control_norm = u.norm_h();
        if control_norm > 0.0 {
            forcing_pairing += u.inner(y);
            rhs = &rhs + &u;
        }
    }
    let phi_active = !dynamics.phi.is_none();
    let mut applied_phi = None;
    if phi_active && cfg.scheme == Scheme::ExplicitPhi {
        let p = yosida(dynamics.phi, y, cfg.lam)?;
        rhs = &rhs - &p;
        applied_phi = Some(p);
    }
    let mut next = y.axpy(dt, &rhs);
    prop.apply(&mut next);
    if phi_active && cfg.scheme == Scheme::SemiImplicitPhi {
        // Backward Euler: the applied value is Phi_lam(y') = Phi_{lam+dt}(y_hat).
        let p = yosida(dynamics.phi, &next, cfg.lam + dt)?;
        next = next.axpy(-dt, &p);
        applied_phi = Some(p);
    }
    let mut next = leray_project(&next);
    if let Some(varpi) = dynamics.safety_varpi {
        if enstrophy(&next) > varpi {
            next = project_enstrophy_ball(&next, varpi)?;
        }
    }
    let t_next = t + dt;
    if !next.is_finite() {
        return Err(Error::BlowUp {
            time: t_next,
            reason: "non-finite coefficient".into(),
        });
    }
    let h = next.norm_h();
    if h > dynamics.blowup_norm {
        return Err(Error::BlowUp {
            time: t_next,
            reason: format!("H-norm {h:.3e} exceeds {:.3e}", dynamics.blowup_norm),
        });
    }
    let (potential_pairing, potential_norm) = match &applied_phi {
        Some(p) => (p.inner(y), p.norm_h()),
        None => (0.0, 0.0),
    };
    if dynamics.feedback.is_none() {
        control_norm = potential_norm;
    }
    let r = params.r;
    let absorption = match dynamics.base {
        None => params.beta * lp_norm_padded(y, r + 1.0)?.powf(r + 1.0),
        Some(_) => params.beta * c.inner(y),
    };
    let convective_pairing = match dynamics.base {
        None => 0.0,
        Some(_) => b.inner(y),
    };
    let es = enstrophy_sq(y);
    let kinetic = 0.5 * y.norm_sqr_h();
    let mut ledger = EnergyLedger {
        kinetic,
        dissipation: params.mu * es,
        absorption,
        convective_pairing,
        potential_pairing,
        forcing_pairing,
        step_residual: 0.0,
        enstrophy_sq: es,
        stokes_sq: stokes_norm_sq(y),
        drift_sq,
    };
    let kinetic_next = 0.5 * next.norm_sqr_h();
    ledger.step_residual = ((kinetic_next - kinetic) / dt + ledger.dissipation + absorption + convective_pairing + potential_pairing
        - forcing_pairing)
        .abs();
    Ok(StepOutcome {
        next,
        ledger,
        control_norm,
        potential_norm,
    })
}

/// One step of the closed-loop system from time `t`.
pub fn step_with(dynamics: &Dynamics, y: &SpectralField, t: f64, cfg: &StepperConfig) -> Result<StepOutcome> {
    cfg.validate()?;
    let prop = Propagator::new(y, dynamics.params.mu, cfg.dt);
    step_inner(dynamics, &prop, &ensure_div_free(y), t, cfg)
}

/// One step of the uncontrolled system.
pub fn step(
    y: &SpectralField,
    t: f64,
    forcing: &Forcing,
    params: &FluidParams,
    phi: &PotentialSpec,
    cfg: &StepperConfig,
) -> Result<SpectralField> {
    Ok(step_with(&Dynamics::new(params, phi, forcing), y, t, cfg)?.next)
}

/// Sampled states plus per-step series.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    /// Sample times; strictly increasing.
    pub times: Vec<f64>,
    /// Global step index of each sample.
    pub sample_steps: Vec<u64>,
    #[serde(skip)]
    pub states: Vec<SpectralField>,
    pub norm_series: Vec<NormReport>,
    /// Left endpoints of the steps.
    pub step_times: Vec<f64>,
    /// H-norm of the applied `Phi_lam` or feedback per step.
    pub control_series: Vec<f64>,
    /// H-norm of the applied `Phi_lam` per step.
    pub potential_series: Vec<f64>,
    pub ledger: Vec<EnergyLedger>,
    pub ledger_residuals: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&SpectralField> {
        self.states.last()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Append a continuation whose first sample repeats this trajectory's last one.
    pub fn extend(&mut self, mut other: Trajectory) {
        if self.times.last().is_some() && self.sample_steps.last() == other.sample_steps.first() {
            other.times.remove(0);
            other.sample_steps.remove(0);
            other.states.remove(0);
            other.norm_series.remove(0);
        }
        self.times.extend(other.times);
        self.sample_steps.extend(other.sample_steps);
        self.states.extend(other.states);
        self.norm_series.extend(other.norm_series);
        self.step_times.extend(other.step_times);
        self.control_series.extend(other.control_series);
        self.potential_series.extend(other.potential_series);
        self.ledger.extend(other.ledger);
        self.ledger_residuals.extend(other.ledger_residuals);
    }

    /// Sample series as CSV: time, H-norm, V-norm, enstrophy and the recorded `L^p` norms.
    pub fn samples_csv(&self) -> String {
        let keys: Vec<String> = self.norm_series.first().map(|n| n.lp_norms.keys().cloned().collect()).unwrap_or_default();
        let mut out = String::from("step,time,h_norm,v_norm,enstrophy");
        for k in &keys {
            out.push_str(&format!(",l{k}"));
        }
        out.push('\n');
        for ((s, t), n) in self.sample_steps.iter().zip(&self.times).zip(&self.norm_series) {
            out.push_str(&format!("{s},{t:.17e},{:.17e},{:.17e},{:.17e}", n.h_norm, n.v_norm, n.enstrophy));
            for k in &keys {
                out.push_str(&format!(",{:.17e}", n.lp_norms.get(k).copied().unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }

    /// Per-step series as CSV.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from(
            "time,control_norm,potential_norm,kinetic,dissipation,absorption,potential_pairing,forcing_pairing,step_residual\n",
        );
        for (i, l) in self.ledger.iter().enumerate() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.step_times[i],
                self.control_series[i],
                self.potential_series[i],
                l.kinetic,
                l.dissipation,
                l.absorption,
                l.potential_pairing,
                l.forcing_pairing,
                l.step_residual
            ));
        }
        out
    }
}

fn sample(traj: &mut Trajectory, y: &SpectralField, step: u64, t: f64, r: f64) -> Result<()> {
    traj.times.push(t);
    traj.sample_steps.push(step);
    traj.norm_series.push(norms(y, &[r + 1.0])?);
    traj.states.push(y.clone());
    Ok(())
}

/// Integrate from global step `start_step` (time `start_step * dt`) to `cfg.t_end`.
///
/// `observer` sees every accepted step and may stop the run early by returning `false`.
pub fn integrate(
    dynamics: &Dynamics,
    y0: &SpectralField,
    start_step: u64,
    cfg: &StepperConfig,
    mut observer: impl FnMut(u64, &SpectralField, &StepOutcome) -> bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    dynamics.params.check_grid(y0.grid())?;
    dynamics.phi.validate()?;
    let mut y = ensure_div_free(y0);
    let prop = Propagator::new(&y, dynamics.params.mu, cfg.dt);
    let total = cfg.steps();
    let r = dynamics.params.r;
    let mut traj = Trajectory {
        dt: cfg.dt,
        ..Default::default()
    };
    sample(&mut traj, &y, start_step, start_step as f64 * cfg.dt, r)?;
    let every = cfg.record_every as u64;
    for n in start_step..total {
        let t = n as f64 * cfg.dt;
        let out = step_inner(dynamics, &prop, &y, t, cfg)?;
        traj.step_times.push(t);
        traj.control_series.push(out.control_norm);
        traj.potential_series.push(out.potential_norm);
        traj.ledger_residuals.push(out.ledger.step_residual);
        traj.ledger.push(out.ledger);
        let keep_going = observer(n + 1, &y, &out);
        y = out.next;
        let done = n + 1 == total || !keep_going;
        if (n + 1) % every == 0 || done {
            sample(&mut traj, &y, n + 1, (n + 1) as f64 * cfg.dt, r)?;
        }
        if !keep_going {
            break;
        }
    }
    Ok(traj)
}

/// Integrate the uncontrolled system from `t = 0` to `cfg.t_end`.
pub fn simulate(
    y0: &SpectralField,
    forcing: &Forcing,
    params: &FluidParams,
    phi: &PotentialSpec,
    cfg: &StepperConfig,
) -> Result<Trajectory> {
    if let Some(varpi) = phi.varpi() {
        let e = enstrophy(y0);
        if e > varpi {
            return Err(Error::OutsideConstraint { enstrophy: e, bound: varpi });
        }
    }
    integrate(&Dynamics::new(params, phi, forcing), y0, 0, cfg, |_, _, _| true)
}

/// Write the final state of `traj` as a checkpoint stamped with its time and step.
pub fn write_checkpoint(path: &Path, traj: &Trajectory) -> Result<()> {
    let state = traj.final_state().ok_or_else(|| Error::Checkpoint("empty trajectory".into()))?;
    let step = *traj.sample_steps.last().expect("nonempty");
    checkpoint::write(path, state, Some(Stamp { time: traj.final_time(), step }))
}

/// Continue a run from a stamped checkpoint up to `cfg.t_end`.
pub fn resume(path: &Path, forcing: &Forcing, params: &FluidParams, phi: &PotentialSpec, cfg: &StepperConfig) -> Result<Trajectory> {
    let (y, stamp) = checkpoint::read(path)?;
    let stamp = stamp.ok_or_else(|| Error::Checkpoint("resume needs a time stamp trailer".into()))?;
    let expected = stamp.step as f64 * cfg.dt;
    if (expected - stamp.time).abs() > 1e-12 * stamp.time.abs().max(1.0) {
        return Err(Error::Checkpoint(format!(
            "stamp time {} does not match step {} at dt = {}",
            stamp.time, stamp.step, cfg.dt
        )));
    }
    integrate(&Dynamics::new(params, phi, forcing), &y, stamp.step, cfg, |_, _, _| true)
}

/// `max step_residual <= c_scheme * dt`, reporting the fitted constant.
pub fn energy_ledger_check(traj: &Trajectory, c_scheme: f64) -> CheckReport {
    let worst = traj.ledger_residuals.iter().copied().fold(0.0, f64::max);
    let fitted = if traj.dt > 0.0 { worst / traj.dt } else { 0.0 };
    CheckReport::new(
        "evolution.energy_ledger",
        c_scheme * traj.dt - worst,
        0.0,
        traj.ledger_residuals.len(),
        "energy balance obtained by pairing the equation with y",
    )
    .with_detail("max_residual", worst)
    .with_detail("fitted_c_scheme", fitted)
}

/// First-order refinement: halving `dt` should halve the largest ledger residual.
pub fn ledger_refinement_check(coarse: &Trajectory, fine: &Trajectory, min_ratio: f64) -> CheckReport {
    let a = coarse.ledger_residuals.iter().copied().fold(0.0, f64::max);
    let b = fine.ledger_residuals.iter().copied().fold(0.0, f64::max);
    let ratio = if b > 0.0 { a / b } else if a == 0.0 { f64::INFINITY } else { 0.0 };
    let order = (ratio.ln() / (coarse.dt / fine.dt).ln()).min(f64::MAX);
    CheckReport::new(
        "evolution.ledger_refinement",
        if ratio.is_infinite() { 0.0 } else { ratio - min_ratio },
        0.0,
        2,
        "first-order quadrature of the energy balance",
    )
    .with_detail("ratio", ratio)
    .with_detail("observed_order", order)
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Time integrals and suprema of the energy-estimate quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateQuantities {
    pub sup_kinetic_sq: f64,
    pub int_dissipation: f64,
    pub int_absorption: f64,
    pub sup_enstrophy_sq: f64,
    pub int_stokes: f64,
    pub int_gradient_weighted: f64,
    pub int_potential_sq: f64,
}

/// Evaluate [`EstimateQuantities`] along a trajectory.
///
/// Step integrals use the left-point rule of the ledger; the weighted gradient
/// term is integrated over the samples by the trapezoid rule.
pub fn estimate_quantities(traj: &Trajectory, params: &FluidParams) -> EstimateQuantities {
    let dt = traj.dt;
    let mut q = EstimateQuantities::default();
    for (l, p) in traj.ledger.iter().zip(&traj.potential_series) {
        q.int_dissipation += dt * l.dissipation;
        q.int_absorption += dt * l.absorption;
        q.int_stokes += dt * params.mu * l.stokes_sq;
        q.int_potential_sq += dt * p * p;
    }
    for s in &traj.states {
        q.sup_kinetic_sq = q.sup_kinetic_sq.max(s.norm_sqr_h());
        q.sup_enstrophy_sq = q.sup_enstrophy_sq.max(enstrophy_sq(s));
    }
    let weighted: Vec<f64> = traj.states.iter().map(|s| params.beta * nonlinear::gradient_weighted(s, params.r)).collect();
    q.int_gradient_weighted = trapezoid(&traj.times, &weighted);
    q
}

/// Energy estimate `||y(t)||^2 + 2 mu int_0^t ||grad y||^2 + 2 beta int_0^t ||y||^(r+1) <= envelope(t)`
/// at every step, with the data-dependent envelope
/// `||y0||^2 + 2 int_0^t |(f + U, y)| + 2 int_0^t (Phi, y)^- + 2 int_0^t residual`,
/// plus finiteness of the higher-order quantities.
pub fn higher_estimate_probe(traj: &Trajectory, params: &FluidParams) -> CheckReport {
    let q = estimate_quantities(traj, params);
    let dt = traj.dt;
    let y0_sq = traj.states.first().map_or(0.0, |s| s.norm_sqr_h());
    let (mut envelope, mut spent) = (y0_sq, 0.0);
    let mut margin = f64::INFINITY;
    let kinetic_after = traj.ledger.iter().skip(1).map(|l| 2.0 * l.kinetic).chain(traj.final_state().map(|s| s.norm_sqr_h()));
    for (l, k_next) in traj.ledger.iter().zip(kinetic_after) {
        envelope += 2.0 * dt * (l.forcing_pairing.abs() + (-l.potential_pairing).max(0.0) + l.convective_pairing.abs() + l.step_residual);
        spent += 2.0 * dt * (l.dissipation + l.absorption);
        margin = margin.min(envelope - k_next - spent);
    }
    if traj.ledger.is_empty() {
        margin = 0.0;
    }
    let finite = [q.sup_enstrophy_sq, q.int_stokes, q.int_gradient_weighted].iter().all(|v| v.is_finite());
    let margin = if finite { margin } else { f64::NAN };
    CheckReport::new(
        "evolution.energy_estimates",
        margin,
        1e-12 * envelope.max(1.0),
        traj.ledger.len(),
        "energy estimates for the regularized evolution",
    )
    .with_detail("sup_kinetic_sq", q.sup_kinetic_sq)
    .with_detail("int_dissipation", q.int_dissipation)
    .with_detail("int_absorption", q.int_absorption)
    .with_detail("sup_enstrophy_sq", q.sup_enstrophy_sq)
    .with_detail("int_stokes", q.int_stokes)
    .with_detail("int_gradient_weighted", q.int_gradient_weighted)
    .with_detail("envelope", envelope)
}

/// Runs over a decreasing `lam` schedule and their Cauchy differences.
#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub lams: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// `sup_t ||y_{lam_i}(t) - y_{lam_{i+1}}(t)||_H`.
    pub cauchy: Vec<f64>,
    /// `int ||Phi_lam(y_lam)||^2 dt` per run.
    pub int_potential_sq: Vec<f64>,
    /// `2 phi_lam(y0) + int ||f - B(y) - beta C(y)||^2 dt` per run, bounding the line above.
    pub potential_envelope: Vec<f64>,
    pub sup_enstrophy_sq: Vec<f64>,
    pub int_stokes: Vec<f64>,
    pub check: CheckReport,
}

/// Run `simulate` for each `lam` in a strictly decreasing schedule, concurrently.
pub fn yosida_continuation(
    y0: &SpectralField,
    forcing: &Forcing,
    params: &FluidParams,
    phi: &PotentialSpec,
    cfg: &StepperConfig,
    lam_schedule: &[f64],
) -> Result<ContinuationReport> {
    if lam_schedule.len() < 2 || lam_schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("lam_schedule", "needs at least two strictly decreasing values"));
    }
    let trajectories: Vec<Trajectory> = lam_schedule
        .par_iter()
        .map(|&lam| {
            let c = StepperConfig { lam, ..*cfg };
            simulate(y0, forcing, params, phi, &c)
        })
        .collect::<Result<_>>()?;
    let mut cauchy = Vec::new();
    for w in trajectories.windows(2) {
        let sup = w[0].states.iter().zip(&w[1].states).map(|(a, b)| (a - b).norm_h()).fold(0.0, f64::max);
        cauchy.push(sup);
    }
    let mut int_potential_sq = Vec::new();
    let mut potential_envelope = Vec::new();
    let mut sup_enstrophy_sq = Vec::new();
    let mut int_stokes = Vec::new();
    for (t, &lam) in trajectories.iter().zip(lam_schedule) {
        let q = estimate_quantities(t, params);
        int_potential_sq.push(q.int_potential_sq);
        sup_enstrophy_sq.push(q.sup_enstrophy_sq);
        int_stokes.push(q.int_stokes);
        let drift: f64 = t.ledger.iter().map(|l| t.dt * l.drift_sq).sum();
        potential_envelope.push(2.0 * crate::potential::moreau(phi, y0, lam)? + drift);
    }
    let decreasing = cauchy.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let bounded = int_potential_sq
        .iter()
        .zip(&potential_envelope)
        .map(|(v, e)| e - v)
        .fold(f64::INFINITY, f64::min);
    let margin = if cauchy.len() < 2 { bounded } else { decreasing.min(bounded) };
    let mut check = CheckReport::new(
        "evolution.yosida_continuation",
        margin,
        0.0,
        lam_schedule.len(),
        "convergence of the regularized solutions as lam -> 0",
    )
    .with_detail("min_cauchy_decrease", decreasing)
    .with_detail("min_potential_slack", bounded)
    .with_detail("max_int_potential_sq", int_potential_sq.iter().copied().fold(0.0, f64::max));
    if cauchy.len() >= 2 && cauchy.windows(2).any(|w| !(w[1] < w[0])) {
        check.passed = false;
    }
    for (i, c) in cauchy.iter().enumerate() {
        check = check.with_detail(&format!("cauchy_{i}"), *c);
    }
    Ok(ContinuationReport {
        lams: lam_schedule.to_vec(),
        trajectories,
        cauchy,
        int_potential_sq,
        potential_envelope,
        sup_enstrophy_sq,
        int_stokes,
        check,
    })
}

/// Pointwise in time: the indicator's `Phi_lam` vanishes whenever the state is inside the ball.
/// Meaningful for the explicit scheme, where `Phi` is evaluated at the recorded state.
pub fn indicator_inactive_inside(traj: &Trajectory, varpi: f64) -> CheckReport {
    let slacks = traj.ledger.iter().zip(&traj.potential_series).map(|(l, p)| {
        if l.enstrophy_sq.sqrt() < varpi * (1.0 - 1e-12) {
            -p
        } else {
            0.0
        }
    });
    CheckReport::from_slacks("evolution.indicator_inactive_inside", slacks, 0.0, "Yosida approximation of an indicator")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::standard::shear_mode;

    fn decay_setup(a: f64) -> (SpectralField, FluidParams) {
        let g = TorusGrid::new(2, 8).unwrap();
        (shear_mode(&g, a, 1), FluidParams::new(0.1, 0.5, 1.0, 2).unwrap())
    }

    #[test]
    fn zero_stays_zero() {
        let g = TorusGrid::new(2, 8).unwrap();
        let p = FluidParams::new(1.0, 1.0, 3.0, 2).unwrap();
        let cfg = StepperConfig::new(1e-3, 1e-2, 1.0, Scheme::ExplicitPhi).unwrap();
        let t = simulate(&SpectralField::zeros(&g), &Forcing::None, &p, &PotentialSpec::None, &cfg).unwrap();
        assert!(t.final_state().unwrap().max_abs() == 0.0);
        assert!(t.ledger_residuals.iter().all(|r| *r == 0.0));
        assert_eq!(t.times.len(), 11);
    }

    #[test]
    fn shear_decay_matches_closed_form() {
        let (y0, p) = decay_setup(1.0);
        let cfg = StepperConfig::new(1e-4, 0.1, 1.0, Scheme::ExplicitPhi).unwrap().with_record_every(100);
        let t = simulate(&y0, &Forcing::None, &p, &PotentialSpec::None, &cfg).unwrap();
        let rate = p.mu * 4.0 * std::f64::consts::PI.powi(2) + p.beta;
        let exact = y0.norm_h() * (-rate * 0.1).exp();
        let got = t.final_state().unwrap().norm_h();
        assert!(((got - exact) / exact).abs() < 1e-3, "{got} vs {exact}");
        assert!((t.final_time() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn explicit_guard() {
        assert!(StepperConfig::new(0.1, 1.0, 0.1, Scheme::ExplicitPhi).is_err());
        assert!(StepperConfig::new(0.1, 1.0, 0.1, Scheme::SemiImplicitPhi).is_ok());
    }

    #[test]
    fn nan_is_blow_up() {
        let (mut y0, p) = decay_setup(1.0);
        y0.coeffs_mut()[3].re = f64::NAN;
        let cfg = StepperConfig::new(1e-3, 1e-2, 1.0, Scheme::ExplicitPhi).unwrap();
        let dynamics = Dynamics::new(&p, &PotentialSpec::None, &Forcing::None);
        match integrate(&dynamics, &y0, 0, &cfg, |_, _, _| true) {
            Err(Error::BlowUp { time, .. }) => assert!((time - 1e-3).abs() < 1e-15),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn semi_implicit_step_solves_backward_euler() {
        let g = TorusGrid::new(2, 8).unwrap();
        let y = shear_mode(&g, 3.0, 1);
        let phi = PotentialSpec::EnstrophyIndicator { varpi: 5.0 };
        let p = FluidParams::new(1.0, 1.0, 1.0, 2).unwrap();
        let cfg = StepperConfig::new(1e-3, 1e-3, 1e-4, Scheme::SemiImplicitPhi).unwrap();
        let f = Forcing::Constant(shear_mode(&g, 2000.0, 1));
        let out = step_with(&Dynamics::new(&p, &phi, &f), &y, 0.0, &cfg).unwrap();
        // y' + dt Phi_lam(y') must equal the pre-potential state.
        let back = out.next.axpy(cfg.dt, &yosida(&phi, &out.next, cfg.lam).unwrap());
        let mut hat = y.axpy(cfg.dt, &(&shear_mode(&g, 2000.0, 1) - &y));
        Propagator::new(&y, p.mu, cfg.dt).apply(&mut hat);
        assert!((&back - &hat).norm_h() < 1e-12 * hat.norm_h());
        assert!(out.potential_norm > 0.0);
    }
}

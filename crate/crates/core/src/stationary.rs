//! The Yosida-regularized stationary problem
//! `mu A y + B(y) + beta C(y) + Phi_lam(y) + kappa~ y = f`
//! and the estimates attached to it.
//!
//! The solver is damped Picard iteration with the exact diagonal preconditioner
//! `(mu A + s I)^-1`: `y <- (1-w) y + w (mu A + s I)^-1 [f - B(y) - beta C(y) - Phi_lam(y)]`.
//! The relaxation `w` starts at 1, halves whenever the residual fails to
//! decrease, and never drops below 1/64.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::nonlinear::{self, forchheimer_unchecked, quantized_convective, FluidParams, QuantizationLevel};
use crate::potential::{yosida, PotentialSpec};
use crate::report::CheckReport;
use crate::spectral::{enstrophy_sq, ensure_div_free, leray_project, lp_norm_padded, norms, stokes_apply, stokes_symbol};
use crate::standard::taylor_green;

const STAGNATION: f64 = 0.999;

/// Shift `kappa` and `kappa~ = kappa + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccretivityShift {
    pub kappa: f64,
    pub kappa_tilde: f64,
}

impl AccretivityShift {
    /// Shift `kappa`, checked against the threshold `rho` where one exists.
    pub fn new(kappa: f64, params: &FluidParams) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("shift must be >= 0, got {kappa}")));
        }
        if let Ok(rho) = nonlinear::rho_threshold(params) {
            if kappa < rho {
                return Err(invalid("kappa", format!("shift {kappa} is below the threshold {rho}")));
            }
        }
        Ok(Self { kappa, kappa_tilde: kappa + 1.0 })
    }
}

/// Which convective term enters the operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convection {
    Full,
    Quantized(QuantizationLevel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub omega_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 5000,
            omega_floor: 1.0 / 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySolveReport {
    #[serde(skip)]
    pub solution: Option<SpectralField>,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    /// H-distance between solutions from two initial guesses.
    pub uniqueness_gap: f64,
    /// Geometric mean of successive residual ratios over the run.
    pub contraction_ratio: f64,
    /// `||y||_{L^4}` of the solution.
    pub l4_norm: f64,
    /// Shift used by the solve.
    pub shift: f64,
}

impl StationarySolveReport {
    pub fn solution(&self) -> &SpectralField {
        self.solution.as_ref().expect("report carries its solution")
    }
}

/// Everything that defines one nonlinear stationary operator.
#[derive(Debug, Clone)]
pub struct StationaryProblem<'a> {
    pub params: &'a FluidParams,
    pub phi: &'a PotentialSpec,
    pub lam: f64,
    pub convection: Convection,
    /// Coefficient of the zeroth-order term.
    pub shift: f64,
}

impl StationaryProblem<'_> {
    /// `B(y) + beta C(y) + Phi_lam(y)`.
    fn nonlinear_part(&self, y: &SpectralField) -> Result<SpectralField> {
        let b = match self.convection {
            Convection::Full => nonlinear::convective(y),
            Convection::Quantized(level) => quantized_convective(y, level),
        };
        let c = forchheimer_unchecked(y, self.params.r);
        let mut out = b.axpy(self.params.beta, &c);
        if !self.phi.is_none() {
            out = &out + &yosida(self.phi, y, self.lam)?;
        }
        Ok(out)
    }

    /// `mu A y + B(y) + beta C(y) + Phi_lam(y) + shift y`.
    pub fn apply(&self, y: &SpectralField) -> Result<SpectralField> {
        let lin = y.map_modes(|k2| self.params.mu * stokes_symbol(k2) + self.shift);
        Ok(&lin + &self.nonlinear_part(y)?)
    }

    pub fn residual(&self, y: &SpectralField, f: &SpectralField) -> Result<f64> {
        Ok((&self.apply(y)? - f).norm_h())
    }

    fn validate(&self, grid: &TorusGrid) -> Result<()> {
        self.params.check_grid(grid)?;
        self.phi.validate()?;
        if !self.phi.is_none() && !(self.lam > 0.0) {
            return Err(invalid("lam", format!("Yosida parameter must be positive, got {}", self.lam)));
        }
        if !(self.shift >= 0.0) {
            return Err(invalid("shift", format!("must be >= 0, got {}", self.shift)));
        }
        Ok(())
    }

    /// Damped Picard iteration from `initial`.
    pub fn solve_from(&self, f: &SpectralField, initial: &SpectralField, opts: &SolverOptions) -> Result<StationarySolveReport> {
        self.validate(f.grid())?;
        let f = ensure_div_free(f);
        let (mu, s) = (self.params.mu, self.shift);
        let precondition = |g: &SpectralField| {
            let mut out = g.map_modes(|k2| {
                let d = mu * stokes_symbol(k2) + s;
                if d > 0.0 {
                    1.0 / d
                } else {
                    0.0
                }
            });
            out.set_divergence_free(g.is_flagged_divergence_free());
            out
        };
        let mut y = ensure_div_free(initial);
        let mut res = self.residual(&y, &f)?;
        let mut history = vec![res];
        let mut omega: f64 = 1.0;
        let mut iterations = 0;
        while res > opts.tol && iterations < opts.max_iterations {
            iterations += 1;
            let rhs = &f - &self.nonlinear_part(&y)?;
            let target = leray_project(&precondition(&rhs));
            let candidate = y.axpy(omega, &(&target - &y));
            let cand_res = self.residual(&candidate, &f)?;
            if !cand_res.is_finite() {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: cand_res,
                    history,
                });
            }
            // Stagnation counts as growth: an undamped iteration can cycle at constant residual.
            if cand_res > STAGNATION * res && omega > opts.omega_floor {
                omega = (omega / 2.0).max(opts.omega_floor);
                continue;
            }
            y = leray_project(&candidate);
            res = cand_res;
            history.push(res);
        }
        if res > opts.tol {
            return Err(Error::NonConvergence {
                iterations,
                residual: res,
                history,
            });
        }
        let contraction_ratio = geometric_ratio(&history);
        let l4_norm = norms(&y, &[4.0])?.lp(4.0).unwrap_or(0.0);
        Ok(StationarySolveReport {
            solution: Some(y),
            iterations,
            final_residual: res,
            residual_history: history,
            uniqueness_gap: 0.0,
            contraction_ratio,
            l4_norm,
            shift: s,
        })
    }

    /// Solve from zero, then from a scaled Taylor-Green field, and record the gap.
    pub fn solve(&self, f: &SpectralField, opts: &SolverOptions) -> Result<StationarySolveReport> {
        let zero = SpectralField::zeros(f.grid());
        let mut first = self.solve_from(f, &zero, opts)?;
        let amp = (f.norm_h() / self.shift.max(1.0)).max(0.5);
        let second = self.solve_from(f, &taylor_green(f.grid(), amp), opts)?;
        first.uniqueness_gap = (first.solution() - second.solution()).norm_h();
        Ok(first)
    }
}

fn geometric_ratio(history: &[f64]) -> f64 {
    let positive: Vec<f64> = history.iter().copied().filter(|r| *r > 0.0).collect();
    if positive.len() < 2 {
        return 0.0;
    }
    let steps = (positive.len() - 1) as f64;
    (positive[positive.len() - 1] / positive[0]).powf(1.0 / steps)
}

/// Solve `mu A y + B(y) + beta C(y) + Phi_lam(y) + kappa~ y = f`.
pub fn solve_stationary(
    f: &SpectralField,
    params: &FluidParams,
    phi: &PotentialSpec,
    lam: f64,
    shift: &AccretivityShift,
    opts: &SolverOptions,
) -> Result<StationarySolveReport> {
    StationaryProblem {
        params,
        phi,
        lam,
        convection: Convection::Full,
        shift: shift.kappa_tilde,
    }
    .solve(f, opts)
}

/// Same iteration with the quantized convective term and shift `eta_n`, for `r <= 3`.
pub fn quantized_stationary_solve(
    f: &SpectralField,
    params: &FluidParams,
    level: QuantizationLevel,
    phi: &PotentialSpec,
    lam: f64,
    eta_n: f64,
    opts: &SolverOptions,
) -> Result<StationarySolveReport> {
    if params.r > 3.0 {
        return Err(invalid("r", "the quantized problem is posed for r in [1, 3]"));
    }
    StationaryProblem {
        params,
        phi,
        lam,
        convection: Convection::Quantized(level),
        shift: eta_n,
    }
    .solve(f, opts)
}

/// `||y||^2 + ||grad y||^2 + ||y||^(r+1)_{L^(r+1)}`.
pub fn energy_functional(y: &SpectralField, r: f64) -> f64 {
    y.norm_sqr_h() + enstrophy_sq(y) + lp_norm_padded(y, r + 1.0).expect("r >= 1").powf(r + 1.0)
}

/// A constant valid for every solution of the shifted problem:
/// `max(1/(2 kt), ||Phi_lam(0)||^2 / kt) / min(kt/4, mu, beta)`.
pub fn explicit_apriori_constant(params: &FluidParams, phi: &PotentialSpec, lam: f64, shift: &AccretivityShift, grid: &TorusGrid) -> Result<f64> {
    let kt = shift.kappa_tilde;
    let phi0 = if phi.is_none() {
        0.0
    } else {
        yosida(phi, &SpectralField::zeros(grid), lam)?.norm_sqr_h()
    };
    Ok((1.0 / (2.0 * kt)).max(phi0 / kt) / (kt / 4.0).min(params.mu).min(params.beta))
}

/// Mode-wise constant of the linear problem (`r = 1`, no potential):
/// `max_k (2 + a_k) / (mu a_k + beta + kt)^2`.
pub fn linear_apriori_constant(params: &FluidParams, shift: &AccretivityShift, grid: &TorusGrid) -> f64 {
    grid.modes()
        .iter()
        .filter(|m| !m.nyquist)
        .map(|m| {
            let a = stokes_symbol(m.k2);
            (2.0 + a) / (params.mu * a + params.beta + shift.kappa_tilde).powi(2)
        })
        .fold(0.0, f64::max)
}

/// Ratios `E(y)/(1 + ||f||^2)` for a sweep of solves, checked against `bound`.
pub fn apriori_bound_check(solves: &[(&StationarySolveReport, &SpectralField)], params: &FluidParams, bound: f64) -> CheckReport {
    let ratios: Vec<f64> = solves
        .iter()
        .map(|(rep, f)| energy_functional(rep.solution(), params.r) / (1.0 + f.norm_sqr_h()))
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let mut rep = CheckReport::from_slacks(
        "stationary-a-priori-bound",
        ratios.iter().map(|r| (bound - r) / bound),
        1e-9,
        "energy of the stationary solution bounded by C (1 + |f|^2)",
    )
    .with_detail("constant", bound)
    .with_detail("max_ratio", worst);
    for (i, r) in ratios.iter().enumerate() {
        rep.details.insert(format!("ratio_{i}"), *r);
    }
    rep
}

/// Exponent `theta` of the Stokes estimate.
pub fn vartheta_exponent(d: usize, r: f64, two_beta_mu_ge_one: bool) -> Result<f64> {
    match d {
        2 if r > 3.0 => Ok(r),
        3 if r > 3.0 && r < 5.0 => Ok((r + 3.0) / (5.0 - r)),
        3 if r == 3.0 && two_beta_mu_ge_one => Ok(3.0),
        3 if r >= 5.0 => Ok(1.0),
        _ => Err(Error::UncoveredRegime(format!(
            "no Stokes estimate exponent for d = {d}, r = {r}, 2 beta mu >= 1: {two_beta_mu_ge_one}"
        ))),
    }
}

/// Implied constant `||A w||^2 / (1 + ||w||^2 + ||mu A w + B w + beta C w + Phi_lam w||^2)^theta`.
pub fn stokes_control_implied_constant(w: &SpectralField, params: &FluidParams, phi: &PotentialSpec, lam: f64) -> Result<f64> {
    let theta = vartheta_exponent(params.dim, params.r, params.two_beta_mu_ge_one())?;
    let problem = StationaryProblem {
        params,
        phi,
        lam,
        convection: Convection::Full,
        shift: 0.0,
    };
    let g = problem.apply(w)?;
    let lhs = stokes_apply(w).norm_sqr_h();
    Ok(lhs / (1.0 + w.norm_sqr_h() + g.norm_sqr_h()).powf(theta))
}

/// Fit the Stokes-estimate constant on two disjoint populations and require the
/// maxima to agree within a factor 2.
pub fn stokes_control_estimate_probe(
    population_a: &[SpectralField],
    population_b: &[SpectralField],
    params: &FluidParams,
    phi: &PotentialSpec,
    lam: f64,
) -> Result<CheckReport> {
    let fit = |pop: &[SpectralField]| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for w in pop {
            worst = worst.max(stokes_control_implied_constant(w, params, phi, lam)?);
        }
        Ok(worst)
    };
    let (ca, cb) = (fit(population_a)?, fit(population_b)?);
    let (lo, hi) = (ca.min(cb), ca.max(cb));
    let margin = if hi == 0.0 { 0.0 } else { (2.0 * lo - hi) / hi };
    Ok(CheckReport::new(
        "stokes-estimate-constant-stability",
        if ca.is_finite() && cb.is_finite() { margin } else { f64::NAN },
        0.0,
        population_a.len() + population_b.len(),
        "fitted constant of the Stokes estimate stable across populations",
    )
    .with_detail("constant_a", ca)
    .with_detail("constant_b", cb))
}

/// `(<(G + kappa I) y - (G + kappa I) z, y - z>, mu/2 ||grad(y - z)||^2)` with
/// `G = mu A + B + beta C`.
pub fn shifted_monotonicity_sides(y: &SpectralField, z: &SpectralField, params: &FluidParams, kappa: f64) -> Result<(f64, f64)> {
    let problem = StationaryProblem {
        params,
        phi: &PotentialSpec::None,
        lam: 1.0,
        convection: Convection::Full,
        shift: kappa,
    };
    let w = y - z;
    let lhs = (&problem.apply(y)? - &problem.apply(z)?).inner(&w);
    Ok((lhs, 0.5 * params.mu * enstrophy_sq(&w)))
}

/// `<G y, y> / (||y||_V + ||y||_{L^(r+1)})` along the ray `t y`.
pub fn coercivity_ratio(y: &SpectralField, params: &FluidParams, kappa: f64) -> Result<f64> {
    let problem = StationaryProblem {
        params,
        phi: &PotentialSpec::None,
        lam: 1.0,
        convection: Convection::Full,
        shift: kappa,
    };
    let pairing = problem.apply(y)?.inner(y);
    let norm = (y.norm_sqr_h() + enstrophy_sq(y)).sqrt() + lp_norm_padded(y, params.r + 1.0)?;
    Ok(pairing / norm)
}

/// Pairings `<G(y + 2^-j z) - G(y), p>` for `j = 1..=levels` against each probe `p`:
/// a sequential-continuity sample. Returns the max over probes per level.
pub fn sequential_continuity_sample(
    y: &SpectralField,
    z: &SpectralField,
    probes: &[SpectralField],
    params: &FluidParams,
    levels: usize,
) -> Result<Vec<f64>> {
    let problem = StationaryProblem {
        params,
        phi: &PotentialSpec::None,
        lam: 1.0,
        convection: Convection::Full,
        shift: 0.0,
    };
    let gy = problem.apply(y)?;
    let mut out = Vec::with_capacity(levels);
    for j in 1..=levels {
        let yj = y.axpy(0.5f64.powi(j as i32), z);
        let diff = &problem.apply(&yj)? - &gy;
        out.push(probes.iter().map(|p| diff.inner(p).abs()).fold(0.0, f64::max));
    }
    Ok(out)
}

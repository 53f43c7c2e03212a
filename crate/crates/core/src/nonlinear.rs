//! Nonlinear operators: the convective term `B(y) = P[(y.grad) y]`, its
//! L^4-quantized variant, the Forchheimer term `C(y) = P(|y|^(r-1) y)` with its
//! Gateaux derivative, and the inequalities tying them together.
//!
//! Products are formed on the zero-padded grid of size `grid.padded_size()` and
//! truncated back to the `n`-grid. For Nyquist-free fields whose triple products
//! stay below the padded Nyquist frequency, pairings against `n`-grid fields
//! are then exact integrals.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{self, SpectralField};
use crate::grid::TorusGrid;
use crate::report::CheckReport;
use crate::spectral::{self, enstrophy_sq, leray_project};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Physical constants. The Darcy coefficient is fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub mu: f64,
    pub beta: f64,
    pub r: f64,
    pub dim: usize,
    #[serde(default)]
    pub alpha: f64,
}

impl FluidParams {
    pub fn new(mu: f64, beta: f64, r: f64, dim: usize) -> Result<Self> {
        let p = Self { mu, beta, r, dim, alpha: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", format!("viscosity must be positive, got {}", self.mu)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("Forchheimer coefficient must be positive, got {}", self.beta)));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(invalid("r", format!("absorption exponent must be >= 1, got {}", self.r)));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(invalid("dim", format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.alpha != 0.0 {
            return Err(invalid("alpha", "the Darcy coefficient is fixed at 0"));
        }
        Ok(())
    }

    /// Validate and confirm the dimension matches `grid`.
    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        self.validate()?;
        if self.dim != grid.dim() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        if self.r < 3.0 {
            Regime::Subcritical
        } else if self.r == 3.0 {
            Regime::Critical
        } else {
            Regime::Supercritical
        }
    }

    pub fn two_beta_mu_ge_one(&self) -> bool {
        2.0 * self.beta * self.mu >= 1.0
    }
}

/// L^4 radius `N` of the quantized convective term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationLevel {
    pub n_level: f64,
}

impl QuantizationLevel {
    pub fn new(n_level: f64) -> Result<Self> {
        if !(n_level >= 0.0) {
            return Err(invalid("n_level", format!("quantization level must be >= 0, got {n_level}")));
        }
        Ok(Self { n_level })
    }
}

/// Samples of a field on the padded product grid.
pub(crate) struct Padded {
    pub d: usize,
    pub m: usize,
    pub np: usize,
    /// Component-major values.
    pub vals: Vec<f64>,
}

impl Padded {
    pub fn of(s: &SpectralField) -> Self {
        let g = s.grid();
        let m = g.padded_size();
        Self {
            d: g.dim(),
            m,
            np: m.pow(g.dim() as u32),
            vals: spectral::to_padded(s, m),
        }
    }

    pub fn at(&self, c: usize, p: usize) -> f64 {
        self.vals[c * self.np + p]
    }

    pub fn magnitude(&self, p: usize) -> f64 {
        (0..self.d).map(|c| self.at(c, p).powi(2)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Padded, p: usize) -> f64 {
        (0..self.d).map(|c| self.at(c, p) * other.at(c, p)).sum()
    }

    /// Quadrature mean of a pointwise function.
    pub fn mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.np).map(f).sum::<f64>() / self.np as f64
    }
}

/// `|v|^e` with the convention `0^0 = 1`.
#[inline]
fn pow_abs(v: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        v.powf(e)
    }
}

/// `P[(y.grad) z]` without the final projection.
fn advect_raw(y: &SpectralField, z: &SpectralField) -> SpectralField {
    let g = y.grid();
    let d = g.dim();
    let m = g.padded_size();
    let np = m.pow(d as u32);
    let u = spectral::to_padded(y, m);
    let grads = spectral::gradient_padded(z, m);
    let mut prod = vec![0.0; d * np];
    for j in 0..d {
        let out = &mut prod[j * np..(j + 1) * np];
        for i in 0..d {
            let ui = &u[i * np..(i + 1) * np];
            let gij = &grads[i * d + j];
            for p in 0..np {
                out[p] += ui[p] * gij[p];
            }
        }
    }
    spectral::from_padded(g, &prod, m)
}

/// Convective term `B(y) = P[(y.grad) y]`.
pub fn convective(y: &SpectralField) -> SpectralField {
    leray_project(&advect_raw(y, y))
}

/// Bilinear convective term `B(y, z) = P[(y.grad) z]`.
pub fn convective_bilinear(y: &SpectralField, z: &SpectralField) -> Result<SpectralField> {
    if y.grid() != z.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(leray_project(&advect_raw(y, z)))
}

/// Trilinear form `b(y, z, w) = int (y.grad) z . w` by padded quadrature.
pub fn trilinear(y: &SpectralField, z: &SpectralField, w: &SpectralField) -> Result<f64> {
    if y.grid() != z.grid() || y.grid() != w.grid() {
        return Err(Error::GridMismatch);
    }
    let g = y.grid();
    let d = g.dim();
    let pw = Padded::of(w);
    let pu = Padded::of(y);
    let grads = spectral::gradient_padded(z, pw.m);
    Ok(pw.mean(|p| {
        let mut acc = 0.0;
        for j in 0..d {
            let mut adv = 0.0;
            for i in 0..d {
                adv += pu.at(i, p) * grads[i * d + j][p];
            }
            acc += adv * pw.at(j, p);
        }
        acc
    }))
}

/// Scale factor `min(1, (N / ||y||_{L^4})^4)` of the quantized convective term.
pub fn quantization_factor(y: &SpectralField, level: QuantizationLevel) -> f64 {
    let l4 = spectral::norms(y, &[4.0]).expect("p = 4 is valid").lp(4.0).unwrap_or(0.0);
    if l4 <= level.n_level {
        1.0
    } else {
        (level.n_level / l4).powi(4)
    }
}

/// Quantized convective term `B_N(y)`.
pub fn quantized_convective(y: &SpectralField, level: QuantizationLevel) -> SpectralField {
    let f = quantization_factor(y, level);
    let b = convective(y);
    if f == 1.0 {
        return b;
    }
    let mut out = b.scale(f);
    out.set_divergence_free(true);
    out
}

/// Forchheimer term `C(y) = P(|y|^(r-1) y)` on the padded grid.
pub fn forchheimer(y: &SpectralField, params: &FluidParams) -> Result<SpectralField> {
    if !(params.r >= 1.0) {
        return Err(invalid("r", format!("absorption exponent must be >= 1, got {}", params.r)));
    }
    Ok(forchheimer_unchecked(y, params.r))
}

pub(crate) fn forchheimer_unchecked(y: &SpectralField, r: f64) -> SpectralField {
    let py = Padded::of(y);
    let e = r - 1.0;
    let mut out = vec![0.0; py.d * py.np];
    for p in 0..py.np {
        let w = pow_abs(py.magnitude(p), e);
        for c in 0..py.d {
            out[c * py.np + p] = w * py.at(c, p);
        }
    }
    leray_project(&spectral::from_padded(y.grid(), &out, py.m))
}

/// Gateaux derivative `C'(y) z`.
///
/// `r = 1`: `P z`. Otherwise `P(|y|^(r-1) z + (r-1) |y|^(r-3) (y.z) y)`, set to
/// zero at points where `y = 0`.
pub fn forchheimer_gateaux(y: &SpectralField, z: &SpectralField, params: &FluidParams) -> Result<SpectralField> {
    if !(params.r >= 1.0) {
        return Err(invalid("r", format!("absorption exponent must be >= 1, got {}", params.r)));
    }
    if y.grid() != z.grid() {
        return Err(Error::GridMismatch);
    }
    if params.r == 1.0 {
        return Ok(leray_project(z));
    }
    let r = params.r;
    let py = Padded::of(y);
    let pz = Padded::of(z);
    let mut out = vec![0.0; py.d * py.np];
    for p in 0..py.np {
        let s = py.magnitude(p);
        if s == 0.0 {
            continue;
        }
        let a = s.powf(r - 1.0);
        let b = (r - 1.0) * s.powf(r - 3.0) * py.dot(&pz, p);
        for c in 0..py.d {
            out[c * py.np + p] = a * pz.at(c, p) + b * py.at(c, p);
        }
    }
    Ok(leray_project(&spectral::from_padded(y.grid(), &out, py.m)))
}

/// `int |z|^power |w|^2` by padded quadrature.
pub fn weighted_l2_sq(z: &SpectralField, w: &SpectralField, power: f64) -> f64 {
    let pz = Padded::of(z);
    let pw = Padded::of(w);
    pz.mean(|p| pow_abs(pz.magnitude(p), power) * pw.magnitude(p).powi(2))
}

/// `int |grad y|^2 |y|^(r-1)` by padded quadrature.
pub fn gradient_weighted(y: &SpectralField, r: f64) -> f64 {
    let py = Padded::of(y);
    let grads = spectral::gradient_padded(y, py.m);
    py.mean(|p| {
        let g2: f64 = grads.iter().map(|g| g[p] * g[p]).sum();
        g2 * pow_abs(py.magnitude(p), r - 1.0)
    })
}

/// Both sides of the torus identity
/// `int (-Delta y).|y|^(r-1) y = int |grad y|^2 |y|^(r-1) + 4 (r-1)/(r+1)^2 int |grad |y|^((r+1)/2)|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(lhs, 1)`.
    pub relative: f64,
}

pub fn critical_identity_residual(y: &SpectralField, params: &FluidParams) -> IdentityResidual {
    let r = params.r;
    let g = y.grid();
    let d = g.dim();
    let py = Padded::of(y);
    let (m, np) = (py.m, py.np);
    let lap = spectral::to_padded(&spectral::neg_laplacian(y), m);
    let lhs = py.mean(|p| {
        let w = pow_abs(py.magnitude(p), r - 1.0);
        (0..d).map(|c| lap[c * np + p] * w * py.at(c, p)).sum::<f64>()
    });
    let first = gradient_weighted(y, r);
    let second = if r == 1.0 {
        0.0
    } else {
        let h: Vec<f64> = (0..np).map(|p| py.magnitude(p).powf((r + 1.0) / 2.0)).collect();
        let spec = field::padded_spectrum(d, &h, m);
        let wv = field::padded_wavevectors(d, m);
        let mut acc = vec![0.0; np];
        for axis in 0..d {
            let dspec: Vec<Complex64> = spec
                .iter()
                .zip(&wv)
                .map(|(v, (k, nyq))| {
                    if *nyq {
                        Complex64::new(0.0, 0.0)
                    } else {
                        v * Complex64::new(0.0, 2.0 * PI * k[axis] as f64)
                    }
                })
                .collect();
            let dv = field::padded_values(d, &dspec, m);
            for (a, v) in acc.iter_mut().zip(dv) {
                *a += v * v;
            }
        }
        4.0 * (r - 1.0) / (r + 1.0).powi(2) * acc.iter().sum::<f64>() / np as f64
    };
    let rhs = first + second;
    IdentityResidual {
        lhs,
        rhs,
        relative: (lhs - rhs).abs() / lhs.abs().max(1.0),
    }
}

/// Accretivity threshold `rho` for which `mu A + B + beta C + rho I` is monotone.
///
/// `r > 3`: `(r-3)/(2 mu (r-1)) (2/(beta mu (r-1)))^(2/(r-3))`; `r = 3` with
/// `2 beta mu >= 1`: 0. Other regimes have no global threshold.
pub fn rho_threshold(params: &FluidParams) -> Result<f64> {
    let (mu, beta, r) = (params.mu, params.beta, params.r);
    if r > 3.0 {
        Ok((r - 3.0) / (2.0 * mu * (r - 1.0)) * (2.0 / (beta * mu * (r - 1.0))).powf(2.0 / (r - 3.0)))
    } else if r == 3.0 && params.two_beta_mu_ge_one() {
        Ok(0.0)
    } else if r == 3.0 {
        Err(Error::NoGlobalThreshold(format!(
            "r = 3 needs 2 beta mu >= 1 for a global threshold, got {}",
            2.0 * beta * mu
        )))
    } else {
        Err(Error::NoGlobalThreshold(format!(
            "r = {r} < 3: only local-in-time well-posedness is available"
        )))
    }
}

/// Both sides of `|<B(y)-B(z), y-z>| <= mu/2 |grad(y-z)|^2 + beta/2 int |z|^(r-1)|y-z|^2 + rho |y-z|^2`.
pub fn convection_absorption_sides(y: &SpectralField, z: &SpectralField, params: &FluidParams) -> Result<(f64, f64)> {
    if !(params.r > 3.0) {
        return Err(invalid("r", "the absorption bound is stated for r > 3"));
    }
    if y.grid() != z.grid() {
        return Err(Error::GridMismatch);
    }
    let rho = rho_threshold(params)?;
    let w = y - z;
    let lhs = (&convective(y) - &convective(z)).inner(&w).abs();
    let rhs = 0.5 * params.mu * enstrophy_sq(&w)
        + 0.5 * params.beta * weighted_l2_sq(z, &w, params.r - 1.0)
        + rho * w.norm_sqr_h();
    Ok((lhs, rhs))
}

/// Check that the Forchheimer damping plus `rho` absorbs the convective difference.
pub fn damping_absorbs_convection_check(
    y: &SpectralField,
    z: &SpectralField,
    params: &FluidParams,
    tolerance: f64,
) -> Result<CheckReport> {
    let (lhs, rhs) = convection_absorption_sides(y, z, params)?;
    let scale = (lhs + rhs).max(f64::MIN_POSITIVE);
    Ok(CheckReport::new(
        "convection-absorbed-by-damping",
        (rhs - lhs) / scale,
        tolerance,
        1,
        "convective difference bounded by half dissipation, half weighted damping and rho",
    )
    .with_detail("lhs", lhs)
    .with_detail("rhs", rhs))
}

/// Sides of the Forchheimer monotonicity chain:
/// `(<C(y)-C(z), y-z>, 1/2 int (|y|^(r-1) + |z|^(r-1)) |y-z|^2, 2^(1-r) ||y-z||^(r+1)_{L^(r+1)})`.
pub fn forchheimer_monotonicity_sides(y: &SpectralField, z: &SpectralField, r: f64) -> (f64, f64, f64) {
    let w = y - z;
    let pairing = (&forchheimer_unchecked(y, r) - &forchheimer_unchecked(z, r)).inner(&w);
    let middle = 0.5 * (weighted_l2_sq(y, &w, r - 1.0) + weighted_l2_sq(z, &w, r - 1.0));
    let lower = 2f64.powf(1.0 - r) * spectral::lp_norm_padded(&w, r + 1.0).expect("r >= 1").powf(r + 1.0);
    (pairing, middle, lower)
}

/// Excess of the quantized convective difference over half the dissipation:
/// `(|<B_N(y) - B_N(z), y - z>| - mu/2 ||grad(y - z)||^2) / ||y - z||^2`.
///
/// The largest value over a population is the fitted constant `C_N` of the split
/// `|<B_N(y) - B_N(z), y - z>| <= mu/2 ||grad(y - z)||^2 + C_N ||y - z||^2`.
pub fn quantized_split_excess(y: &SpectralField, z: &SpectralField, params: &FluidParams, level: QuantizationLevel) -> Result<f64> {
    if y.grid() != z.grid() {
        return Err(Error::GridMismatch);
    }
    let w = y - z;
    let h2 = w.norm_sqr_h();
    if h2 == 0.0 {
        return Ok(0.0);
    }
    let lhs = (&quantized_convective(y, level) - &quantized_convective(z, level)).inner(&w).abs();
    Ok((lhs - 0.5 * params.mu * enstrophy_sq(&w)) / h2)
}

/// Ratio `||y||^(r+1)_{L^(3(r+1))} / int |grad y|^2 |y|^(r-1)`; infinite when only
/// the denominator vanishes, zero when the numerator does.
pub fn embedding_ratio(y: &SpectralField, params: &FluidParams) -> f64 {
    let r = params.r;
    let lhs = spectral::lp_norm_padded(y, 3.0 * (r + 1.0)).expect("p >= 1").powf(r + 1.0);
    let rhs = gradient_weighted(y, r);
    if lhs == 0.0 {
        0.0
    } else if rhs <= 1e-300 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::FieldSampler;
    use crate::spectral::enstrophy;
    use crate::standard::{constant, shear_mode, taylor_green};
    use approx::assert_relative_eq;

    fn params(r: f64) -> FluidParams {
        FluidParams::new(1.0, 1.0, r, 2).unwrap()
    }

    #[test]
    fn constant_field_has_no_convection() {
        let g = TorusGrid::new(2, 16).unwrap();
        let b = convective(&constant(&g, [0.3, -1.2, 0.0]));
        assert!(b.max_abs() < 1e-15);
    }

    #[test]
    fn convection_is_energy_neutral() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut s = FieldSampler::new(3);
        for _ in 0..10 {
            let y = s.smooth(&g, 1.0, 1.0);
            let v3 = (y.norm_sqr_h() + enstrophy_sq(&y)).powf(1.5);
            assert!(convective(&y).inner(&y).abs() <= 1e-12 * v3);
        }
    }

    #[test]
    fn taylor_green_convection_closed_form() {
        // (y.grad) y = pi (sin 4 pi x1, sin 4 pi x2), a pure gradient, so B(y) = 0,
        // while the unprojected product carries exactly those modes.
        let g = TorusGrid::new(2, 16).unwrap();
        let y = taylor_green(&g, 1.0);
        let raw = advect_raw(&y, &y);
        let m = raw.mode([2, 0, 0]).unwrap();
        assert_relative_eq!(m[0].im, -PI / 2.0, epsilon = 1e-12);
        assert!(m[0].re.abs() < 1e-12 && m[1].norm() < 1e-12);
        let m = raw.mode([0, 2, 0]).unwrap();
        assert_relative_eq!(m[1].im, -PI / 2.0, epsilon = 1e-12);
        let energy = raw.norm_sqr_h();
        assert_relative_eq!(energy, PI * PI, epsilon = 1e-12);
        assert!(convective(&y).max_abs() < 1e-12);
    }

    #[test]
    fn trilinear_matches_brute_force() {
        let g = TorusGrid::new(2, 8).unwrap();
        let y = taylor_green(&g, 1.0);
        let z = shear_mode(&g, 0.7, 1);
        let w = &shear_mode(&g, 1.0, 2) + &taylor_green(&g, 0.5);
        // Direct collocation sum of closed-form fields on a 64^2 grid.
        let n = 64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = (i as f64 / n as f64, j as f64 / n as f64);
                let (s1, c1) = (2.0 * PI * x1).sin_cos();
                let (s2, c2) = (2.0 * PI * x2).sin_cos();
                let yv = [s1 * c2, -c1 * s2];
                // z = (0.7 sin 2 pi x2, 0): only dz1/dx2 is nonzero.
                let dz1_dx2 = 0.7 * 2.0 * PI * c2;
                let wv = [(4.0 * PI * x2).sin() + 0.5 * s1 * c2, -0.5 * c1 * s2];
                acc += yv[1] * dz1_dx2 * wv[0];
            }
        }
        acc /= (n * n) as f64;
        assert_relative_eq!(trilinear(&y, &z, &w).unwrap(), acc, epsilon = 1e-12);
    }

    #[test]
    fn trilinear_antisymmetry() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut s = FieldSampler::new(5);
        let (y, z, w) = (s.smooth(&g, 1.0, 1.0), s.raw(&g, 1.0, 1.0), s.raw(&g, 1.0, 1.0));
        let a = trilinear(&y, &z, &w).unwrap();
        let b = trilinear(&y, &w, &z).unwrap();
        assert!((a + b).abs() < 1e-12 * (a.abs() + 1.0));
        assert!(trilinear(&y, &z, &z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn quantization_rules() {
        let g = TorusGrid::new(2, 16).unwrap();
        let y = FieldSampler::new(9).smooth(&g, 1.0, 1.0);
        let l4 = spectral::norms(&y, &[4.0]).unwrap().lp(4.0).unwrap();
        let b = convective(&y);
        let big = quantized_convective(&y, QuantizationLevel::new(l4 * 1.01).unwrap());
        assert_eq!(big, b);
        assert!(quantized_convective(&y, QuantizationLevel::new(0.0).unwrap()).max_abs() == 0.0);
        let half = quantized_convective(&y, QuantizationLevel::new(l4 / 2.0).unwrap());
        assert!(half.max_abs_diff(&b.scale(1.0 / 16.0)) < 1e-15 * b.max_abs().max(1.0) * 16.0);
        assert!(QuantizationLevel::new(-1.0).is_err());
    }

    #[test]
    fn forchheimer_linear_and_pairing() {
        let g = TorusGrid::new(2, 16).unwrap();
        let y = FieldSampler::new(11).smooth(&g, 1.0, 1.0);
        let c1 = forchheimer(&y, &params(1.0)).unwrap();
        assert!(c1.max_abs_diff(&y) < 1e-14);
        for r in [2.0, 3.0, 4.5] {
            let c = forchheimer(&y, &params(r)).unwrap();
            let lp = spectral::lp_norm_padded(&y, r + 1.0).unwrap().powf(r + 1.0);
            assert_relative_eq!(c.inner(&y), lp, max_relative = 1e-12);
        }
        let bad = FluidParams { r: 0.5, ..params(1.0) };
        assert!(forchheimer(&y, &bad).is_err());
    }

    #[test]
    fn forchheimer_monotone_chain() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut s = FieldSampler::new(13);
        for r in [1.0, 2.0, 3.0, 5.0] {
            for _ in 0..5 {
                let (y, z) = (s.smooth(&g, 1.5, 1.0), s.smooth(&g, 1.0, 1.0));
                let (pair, mid, low) = forchheimer_monotonicity_sides(&y, &z, r);
                assert!(pair >= mid * (1.0 - 1e-12));
                assert!(mid >= low * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn gateaux_branches() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut s = FieldSampler::new(17);
        let z = s.raw(&g, 1.0, 1.0);
        let p1 = forchheimer_gateaux(&s.smooth(&g, 1.0, 1.0), &z, &params(1.0)).unwrap();
        assert!(p1.max_abs_diff(&leray_project(&z)) < 1e-15);
        let zero = SpectralField::zeros(&g);
        let d = forchheimer_gateaux(&zero, &z, &params(2.0)).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn gateaux_matches_finite_differences() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut s = FieldSampler::new(19);
        let (y, z) = (s.smooth(&g, 1.0, 1.0), s.smooth(&g, 1.0, 1.0));
        let p = params(4.0);
        let dz = forchheimer_gateaux(&y, &z, &p).unwrap();
        let c0 = forchheimer(&y, &p).unwrap();
        let err = |h: f64| (&(&forchheimer(&y.axpy(h, &z), &p).unwrap() - &c0).scale(1.0 / h) - &dz).norm_h();
        let (e1, e2) = (err(1e-3), err(1e-4));
        assert!(e2 < e1 / 8.0, "{e1} {e2}");
    }

    #[test]
    fn rho_values() {
        assert_relative_eq!(rho_threshold(&params(5.0)).unwrap(), 0.125, epsilon = 1e-15);
        assert_relative_eq!(rho_threshold(&params(7.0)).unwrap(), 3f64.powf(-1.5), epsilon = 1e-15);
        assert_eq!(rho_threshold(&params(3.0)).unwrap(), 0.0);
        let weak = FluidParams::new(0.4, 1.0, 3.0, 2).unwrap();
        assert!(matches!(rho_threshold(&weak), Err(Error::NoGlobalThreshold(_))));
        assert!(rho_threshold(&params(2.0)).is_err());
    }

    #[test]
    fn absorption_bound_trivial_cases() {
        let g = TorusGrid::new(2, 16).unwrap();
        let y = FieldSampler::new(23).smooth(&g, 2.0, 1.0);
        let zero = SpectralField::zeros(&g);
        let r = damping_absorbs_convection_check(&y, &zero, &params(5.0), 1e-10).unwrap();
        assert!(r.passed && r.details["lhs"] < 1e-10);
        let r = damping_absorbs_convection_check(&y, &y, &params(5.0), 1e-10).unwrap();
        assert!(r.passed && r.details["rhs"] == 0.0);
        assert!(damping_absorbs_convection_check(&y, &zero, &params(3.0), 1e-10).is_err());
    }

    #[test]
    fn torus_identity_linear_case() {
        let g = TorusGrid::new(2, 16).unwrap();
        let y = FieldSampler::new(29).smooth(&g, 1.0, 1.0);
        let res = critical_identity_residual(&y, &params(1.0));
        assert!(res.relative < 1e-10);
        assert_relative_eq!(res.lhs, enstrophy(&y).powi(2), max_relative = 1e-12);
        let z = critical_identity_residual(&SpectralField::zeros(&g), &params(3.0));
        assert_eq!((z.lhs, z.rhs, z.relative), (0.0, 0.0, 0.0));
    }

    #[test]
    fn embedding_ratio_edge_cases() {
        let g = TorusGrid::new(2, 16).unwrap();
        assert_eq!(embedding_ratio(&SpectralField::zeros(&g), &params(3.0)), 0.0);
        assert!(embedding_ratio(&constant(&g, [1.0, 0.0, 0.0]), &params(3.0)).is_infinite());
        let y = FieldSampler::new(31).smooth(&g, 1.0, 1.0);
        assert!(embedding_ratio(&y, &params(3.0)).is_finite());
    }
}

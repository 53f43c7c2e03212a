//! Convex potentials `phi` with subdifferential `Phi = d phi`: resolvents
//! `J_lam = (I + lam Phi)^-1`, Yosida approximations `Phi_lam = (I - J_lam)/lam`
//! and Moreau envelopes.
//!
//! The enstrophy ball is `K = {z : ||grad z||_H <= varpi}`. Its H-projection
//! has the multiplier form `z_k = y_k / (1 + nu (2 pi |k|)^2)` with a scalar
//! Lagrange multiplier `nu >= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::SpectralField;
use crate::nonlinear::FluidParams;
use crate::report::CheckReport;
use crate::spectral::{ensure_div_free, enstrophy, stokes_apply, stokes_symbol};

/// Yosida branch used for the scaled sign operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignBranch {
    /// Proximal map of `kappa ||. - y1||`: threshold `lam kappa`, inner slope `1/lam`.
    #[default]
    Proximal,
    /// Threshold `lam`, inner slope `kappa/lam`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    None,
    /// Indicator of the enstrophy ball of radius `varpi`.
    EnstrophyIndicator { varpi: f64 },
    /// `kappa ||. - target||_H`, whose subdifferential is `kappa sgn(. - target)`.
    SignBall {
        kappa_c: f64,
        target: SpectralField,
        branch: SignBranch,
    },
    /// `theta/2 ||.||^2` plus the enstrophy-ball indicator.
    TikhonovIndicator { theta: f64, varpi: f64 },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::None => Ok(()),
            Self::EnstrophyIndicator { varpi } => check_positive("varpi", *varpi),
            Self::SignBall { kappa_c, .. } => check_positive("kappa_c", *kappa_c),
            Self::TikhonovIndicator { theta, varpi } => {
                check_positive("theta", *theta)?;
                check_positive("varpi", *varpi)
            }
        }
    }

    /// Enstrophy bound of the constraint set, if the potential has one.
    pub fn varpi(&self) -> Option<f64> {
        match self {
            Self::EnstrophyIndicator { varpi } | Self::TikhonovIndicator { varpi, .. } => Some(*varpi),
            _ => None,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_lam(lam: f64) -> Result<()> {
    if lam > 0.0 && lam.is_finite() {
        Ok(())
    } else {
        Err(invalid("lam", format!("Yosida parameter must be positive, got {lam}")))
    }
}

fn ball_multiplier(y: &SpectralField, nu: f64) -> SpectralField {
    let mut z = y.map_modes(|k2| 1.0 / (1.0 + nu * stokes_symbol(k2)));
    z.set_divergence_free(y.is_flagged_divergence_free());
    z
}

/// `(||grad z(nu)||^2, d/dnu ||grad z(nu)||^2)` for `z(nu)_k = y_k / (1 + nu a_k)`.
fn ball_enstrophy(y: &SpectralField, nu: f64) -> (f64, f64) {
    let len = y.grid().spectral_len();
    let mut e = 0.0;
    let mut de = 0.0;
    for (i, m) in y.grid().modes().iter().enumerate() {
        let a = stokes_symbol(m.k2);
        if a == 0.0 {
            continue;
        }
        let mut amp = 0.0;
        for c in 0..y.grid().dim() {
            amp += y.coeffs()[c * len + i].norm_sqr();
        }
        let q = 1.0 + nu * a;
        e += m.weight * a * amp / (q * q);
        de -= 2.0 * m.weight * a * a * amp / (q * q * q);
    }
    (e, de)
}

/// Lagrange multiplier of the enstrophy-ball projection (0 inside the ball).
pub fn enstrophy_ball_multiplier(y: &SpectralField, varpi: f64) -> Result<f64> {
    check_positive("varpi", varpi)?;
    let target = varpi * varpi;
    let (e0, _) = ball_enstrophy(y, 0.0);
    if e0 <= target {
        return Ok(0.0);
    }
    // The smallest nonzero multiplier is (2 pi)^2, so at nu_hi the enstrophy is
    // at most ||y||_H^2 / (nu_hi^2 (2 pi)^2) = varpi^2.
    let mut lo = 0.0;
    let mut hi = y.norm_h() / (2.0 * std::f64::consts::PI * varpi);
    while ball_enstrophy(y, hi).0 > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-6 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ball_enstrophy(y, mid).0 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton on the square root keeps the iteration nearly linear.
    let mut nu = hi;
    for _ in 0..50 {
        let (e, de) = ball_enstrophy(y, nu);
        let s = e.sqrt();
        let f = s - varpi;
        if f.abs() <= 1e-15 * varpi {
            break;
        }
        let step = f / (0.5 * de / s);
        let next = nu - step;
        nu = if next > lo && next < 2.0 * hi { next } else { 0.5 * (lo + hi) };
        if step.abs() <= 1e-16 * nu {
            break;
        }
    }
    Ok(nu)
}

/// H-projection onto the enstrophy ball `{||grad z|| <= varpi}`.
pub fn project_enstrophy_ball(y: &SpectralField, varpi: f64) -> Result<SpectralField> {
    let y = ensure_div_free(y);
    let mut nu = enstrophy_ball_multiplier(&y, varpi)?;
    if nu == 0.0 {
        return Ok(y);
    }
    // Land on the feasible side so the result is a member of the ball.
    let mut z = ball_multiplier(&y, nu);
    while enstrophy(&z) > varpi {
        nu *= 1.0 + 1e-14;
        z = ball_multiplier(&y, nu);
    }
    Ok(z)
}

/// Resolvent `J_lam(y) = (I + lam Phi)^-1 y`.
pub fn resolvent(phi: &PotentialSpec, y: &SpectralField, lam: f64) -> Result<SpectralField> {
    check_lam(lam)?;
    phi.validate()?;
    match phi {
        PotentialSpec::None => Ok(y.clone()),
        PotentialSpec::EnstrophyIndicator { varpi } => project_enstrophy_ball(y, *varpi),
        PotentialSpec::SignBall { .. } => Ok(y.axpy(-lam, &yosida(phi, y, lam)?)),
        PotentialSpec::TikhonovIndicator { theta, varpi } => {
            let mut shrunk = y.scale(1.0 / (1.0 + lam * theta));
            shrunk.set_divergence_free(y.is_flagged_divergence_free());
            project_enstrophy_ball(&shrunk, *varpi)
        }
    }
}

/// Yosida approximation `Phi_lam(y) = (y - J_lam y) / lam`.
pub fn yosida(phi: &PotentialSpec, y: &SpectralField, lam: f64) -> Result<SpectralField> {
    check_lam(lam)?;
    phi.validate()?;
    match phi {
        PotentialSpec::None => Ok(SpectralField::zeros(y.grid())),
        PotentialSpec::SignBall { kappa_c, target, branch } => {
            if y.grid() != target.grid() {
                return Err(Error::GridMismatch);
            }
            let v = y - target;
            let nv = v.norm_h();
            let (threshold, inner) = match branch {
                SignBranch::Proximal => (lam * kappa_c, 1.0 / lam),
                SignBranch::Literal => (lam, kappa_c / lam),
            };
            let factor = if nv >= threshold { kappa_c / nv } else { inner };
            let mut out = v.scale(factor);
            out.set_divergence_free(y.is_flagged_divergence_free() && target.is_flagged_divergence_free());
            Ok(out)
        }
        _ => {
            let j = resolvent(phi, y, lam)?;
            let mut out = (y - &j).scale(1.0 / lam);
            out.set_divergence_free(j.is_flagged_divergence_free());
            Ok(out)
        }
    }
}

/// The potential `phi(y)`, `+inf` outside its domain.
pub fn potential_value(phi: &PotentialSpec, y: &SpectralField) -> Result<f64> {
    phi.validate()?;
    Ok(match phi {
        PotentialSpec::None => 0.0,
        PotentialSpec::EnstrophyIndicator { varpi } => {
            if enstrophy(y) <= *varpi {
                0.0
            } else {
                f64::INFINITY
            }
        }
        PotentialSpec::SignBall { kappa_c, target, .. } => kappa_c * (y - target).norm_h(),
        PotentialSpec::TikhonovIndicator { theta, varpi } => {
            if enstrophy(y) <= *varpi {
                0.5 * theta * y.norm_sqr_h()
            } else {
                f64::INFINITY
            }
        }
    })
}

/// Moreau envelope `phi_lam(y) = phi(J_lam y) + ||y - J_lam y||^2 / (2 lam)`.
pub fn moreau(phi: &PotentialSpec, y: &SpectralField, lam: f64) -> Result<f64> {
    check_lam(lam)?;
    match phi {
        PotentialSpec::None => Ok(0.0),
        PotentialSpec::EnstrophyIndicator { .. } => {
            let j = resolvent(phi, y, lam)?;
            Ok((y - &j).norm_sqr_h() / (2.0 * lam))
        }
        PotentialSpec::SignBall {
            kappa_c,
            target,
            branch: SignBranch::Proximal,
        } => {
            // Huber function of ||y - target||.
            let nv = (y - target).norm_h();
            Ok(if nv >= lam * kappa_c {
                kappa_c * nv - 0.5 * lam * kappa_c * kappa_c
            } else {
                nv * nv / (2.0 * lam)
            })
        }
        PotentialSpec::SignBall { kappa_c, target, .. } => {
            let j = resolvent(phi, y, lam)?;
            Ok(kappa_c * (&j - target).norm_h() + (y - &j).norm_sqr_h() / (2.0 * lam))
        }
        PotentialSpec::TikhonovIndicator { theta, .. } => {
            let j = resolvent(phi, y, lam)?;
            Ok(0.5 * theta * j.norm_sqr_h() + (y - &j).norm_sqr_h() / (2.0 * lam))
        }
    }
}

/// Element `lam0 A y` of the normal cone of the enstrophy ball; zero strictly inside.
///
/// States within the relative `band` of the boundary count as boundary points.
pub fn normal_cone_select(y: &SpectralField, varpi: f64, lam0: f64, band: f64) -> Result<SpectralField> {
    check_positive("varpi", varpi)?;
    if !(lam0 >= 0.0) {
        return Err(invalid("lam0", format!("cone multiplier must be >= 0, got {lam0}")));
    }
    let e = enstrophy(y);
    if e > varpi * (1.0 + band) {
        return Err(Error::OutsideConstraint { enstrophy: e, bound: varpi });
    }
    if e < varpi * (1.0 - band) || lam0 == 0.0 {
        return Ok(SpectralField::zeros(y.grid()));
    }
    let mut out = stokes_apply(y).scale(lam0);
    out.set_divergence_free(true);
    Ok(out)
}

/// Constants `gamma >= 0`, `varsigma` of the compatibility condition between `A` and `Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub gamma: f64,
    pub varsigma: f64,
}

impl HypothesisConstants {
    /// `varsigma` must lie in `(0, 1/mu)`, except `d = 3, r >= 5` where it is 0.
    pub fn new(gamma: f64, varsigma: f64, params: &FluidParams) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(invalid("gamma", format!("must be >= 0, got {gamma}")));
        }
        if params.dim == 3 && params.r >= 5.0 {
            if varsigma != 0.0 {
                return Err(invalid("varsigma", "must be 0 for d = 3, r >= 5"));
            }
        } else if !(varsigma > 0.0 && varsigma < 1.0 / params.mu) {
            return Err(invalid("varsigma", format!("must lie in (0, 1/mu), got {varsigma}")));
        }
        Ok(Self { gamma, varsigma })
    }
}

/// Probe `(A y, Phi_lam y) >= -gamma (1 + ||y||^2) - varsigma ||Phi_lam y||^2`.
/// For indicator-type potentials the stronger bound `(A y, Phi_lam y) >= 0` is checked.
pub fn hypothesis_h3_probe(
    phi: &PotentialSpec,
    y: &SpectralField,
    lam: f64,
    consts: &HypothesisConstants,
    tolerance: f64,
) -> Result<CheckReport> {
    let ay = stokes_apply(y);
    let py = yosida(phi, y, lam)?;
    let lhs = ay.inner(&py);
    let rhs = match phi {
        PotentialSpec::EnstrophyIndicator { .. } | PotentialSpec::TikhonovIndicator { .. } => 0.0,
        _ => -consts.gamma * (1.0 + y.norm_sqr_h()) - consts.varsigma * py.norm_sqr_h(),
    };
    let scale = (ay.norm_h() * py.norm_h() + rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(CheckReport::new(
        "stokes-potential-compatibility",
        (lhs - rhs) / scale,
        tolerance,
        1,
        "pairing of the Stokes operator with the Yosida approximation bounded below",
    )
    .with_detail("lhs", lhs)
    .with_detail("rhs", rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::random::FieldSampler;
    use crate::spectral::stokes_resolvent;
    use crate::standard::shear_mode;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(2, 16).unwrap()
    }

    #[test]
    fn projection_inside_is_identity() {
        let y = FieldSampler::new(1).smooth(&grid(), 1.0, 1.0);
        let e = enstrophy(&y);
        assert_eq!(project_enstrophy_ball(&y, e * 1.1).unwrap(), y);
        assert!(project_enstrophy_ball(&y, 0.0).is_err());
    }

    #[test]
    fn single_mode_projection_closed_form() {
        let g = grid();
        let mut y = SpectralField::zeros(&g);
        y.set_mode([1, 0, 0], [Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.1), Complex64::new(0.0, 0.0)])
            .unwrap();
        let varpi = enstrophy(&y) / 2.0;
        let nu = enstrophy_ball_multiplier(&y, varpi).unwrap();
        assert_relative_eq!(nu, 1.0 / (4.0 * PI * PI), max_relative = 1e-12);
        let z = project_enstrophy_ball(&y, varpi).unwrap();
        assert_relative_eq!(enstrophy(&z), varpi, max_relative = 1e-12);
    }

    #[test]
    fn projection_lands_on_boundary() {
        let mut s = FieldSampler::new(2);
        for _ in 0..20 {
            let y = s.smooth(&grid(), 3.0, 0.5);
            let varpi = enstrophy(&y) * s.uniform(0.01, 0.9);
            let z = project_enstrophy_ball(&y, varpi).unwrap();
            assert!((enstrophy(&z) - varpi).abs() <= 1e-12 * varpi);
        }
    }

    #[test]
    fn projection_variational_inequality() {
        let mut s = FieldSampler::new(3);
        let g = grid();
        let y = s.smooth(&g, 2.0, 1.0);
        let varpi = 0.3 * enstrophy(&y);
        let z = project_enstrophy_ball(&y, varpi).unwrap();
        for _ in 0..20 {
            let w = project_enstrophy_ball(&s.smooth(&g, 5.0, 1.0), varpi).unwrap();
            let w = w.scale(s.uniform(0.0, 1.0));
            assert!((&y - &z).inner(&(&w - &z)) <= 1e-10 * y.norm_sqr_h());
        }
    }

    #[test]
    fn stokes_resolvent_keeps_ball_invariant() {
        let y = FieldSampler::new(4).smooth(&grid(), 1.0, 1.0);
        let varpi = enstrophy(&y);
        for lam in [1e-4, 1e-2, 1.0] {
            assert!(enstrophy(&stokes_resolvent(&y, lam).unwrap()) <= varpi);
        }
    }

    #[test]
    fn sign_ball_shrinkage() {
        let g = grid();
        let mut s = FieldSampler::new(5);
        let target = s.smooth(&g, 0.2, 1.0);
        let v = s.smooth(&g, 1.0, 1.0);
        let (lam, kappa) = (0.1, 2.0);
        let y = target.axpy(3.0 * lam * kappa, &v);
        let phi = PotentialSpec::SignBall { kappa_c: kappa, target: target.clone(), branch: SignBranch::Proximal };
        let j = resolvent(&phi, &y, lam).unwrap();
        let expect = target.axpy(2.0 / 3.0, &(&y - &target));
        assert!(j.max_abs_diff(&expect) < 1e-14);
        let py = yosida(&phi, &y, lam).unwrap();
        assert_relative_eq!(py.norm_h(), kappa, max_relative = 1e-13);
        let near = target.axpy(0.5 * lam * kappa, &v);
        let pn = yosida(&phi, &near, lam).unwrap();
        assert!(pn.max_abs_diff(&(&near - &target).scale(1.0 / lam)) < 1e-13);
    }

    #[test]
    fn literal_sign_branch_threshold() {
        let g = grid();
        let v = FieldSampler::new(6).smooth(&g, 1.0, 1.0);
        let phi = PotentialSpec::SignBall {
            kappa_c: 2.0,
            target: SpectralField::zeros(&g),
            branch: SignBranch::Literal,
        };
        let lam = 0.1;
        let inner = v.scale(0.5 * lam);
        let out = yosida(&phi, &inner, lam).unwrap();
        assert!(out.max_abs_diff(&inner.scale(2.0 / lam)) < 1e-14);
        let outer = v.scale(1.5 * lam);
        assert_relative_eq!(yosida(&phi, &outer, lam).unwrap().norm_h(), 2.0, max_relative = 1e-13);
    }

    #[test]
    fn none_and_inside_cases() {
        let g = grid();
        let y = FieldSampler::new(7).smooth(&g, 1.0, 1.0);
        assert_eq!(resolvent(&PotentialSpec::None, &y, 0.5).unwrap(), y);
        let phi = PotentialSpec::EnstrophyIndicator { varpi: 2.0 * enstrophy(&y) };
        assert_eq!(yosida(&phi, &y, 0.5).unwrap().max_abs(), 0.0);
        assert_eq!(moreau(&phi, &y, 0.5).unwrap(), 0.0);
        assert!(resolvent(&phi, &y, 0.0).is_err());
    }

    #[test]
    fn moreau_sandwich_and_scaling() {
        let g = grid();
        let y = FieldSampler::new(8).smooth(&g, 1.0, 1.0);
        let phi = PotentialSpec::EnstrophyIndicator { varpi: 0.5 * enstrophy(&y) };
        let a = moreau(&phi, &y, 0.2).unwrap();
        let b = moreau(&phi, &y, 0.4).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-14);
        let j = resolvent(&phi, &y, 0.2).unwrap();
        assert!(potential_value(&phi, &j).unwrap() <= a);
        assert!(a.is_finite() && potential_value(&phi, &y).unwrap().is_infinite());
        let sign = PotentialSpec::SignBall { kappa_c: 1.5, target: SpectralField::zeros(&g), branch: SignBranch::Proximal };
        for lam in [0.01, 1.0, 10.0] {
            let env = moreau(&sign, &y, lam).unwrap();
            let jy = resolvent(&sign, &y, lam).unwrap();
            let direct = potential_value(&sign, &jy).unwrap() + (&y - &jy).norm_sqr_h() / (2.0 * lam);
            assert_relative_eq!(env, direct, max_relative = 1e-12);
            assert!(env <= potential_value(&sign, &y).unwrap());
        }
    }

    #[test]
    fn yosida_monotone_and_lipschitz() {
        let g = grid();
        let mut s = FieldSampler::new(9);
        let target = s.smooth(&g, 0.5, 1.0);
        let phis = [
            PotentialSpec::EnstrophyIndicator { varpi: 3.0 },
            PotentialSpec::SignBall { kappa_c: 1.0, target, branch: SignBranch::Proximal },
            PotentialSpec::TikhonovIndicator { theta: 2.0, varpi: 3.0 },
        ];
        let lam = 0.3;
        for phi in &phis {
            for _ in 0..10 {
                let (a, b) = (s.uniform(0.1, 2.0), s.uniform(0.1, 2.0));
                let (y, z) = (s.smooth(&g, a, 0.5), s.smooth(&g, b, 0.5));
                let d = &y - &z;
                let dp = &yosida(phi, &y, lam).unwrap() - &yosida(phi, &z, lam).unwrap();
                assert!(dp.inner(&d) >= -1e-12 * d.norm_sqr_h() / lam);
                assert!(dp.norm_h() <= d.norm_h() / lam * (1.0 + 1e-12));
                let dj = &resolvent(phi, &y, lam).unwrap() - &resolvent(phi, &z, lam).unwrap();
                assert!(dj.norm_h() <= d.norm_h() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn normal_cone_cases() {
        let g = grid();
        let y = shear_mode(&g, 1.0, 1);
        let e = enstrophy(&y);
        assert_eq!(normal_cone_select(&y, 2.0 * e, 3.0, 1e-8).unwrap().max_abs(), 0.0);
        assert_eq!(normal_cone_select(&y, e, 0.0, 1e-8).unwrap().max_abs(), 0.0);
        let c = normal_cone_select(&y, e, 2.0, 1e-8).unwrap();
        assert!(c.max_abs_diff(&stokes_apply(&y).scale(2.0)) < 1e-14);
        assert!(matches!(normal_cone_select(&y, 0.5 * e, 1.0, 1e-8), Err(Error::OutsideConstraint { .. })));
    }

    #[test]
    fn compatibility_probe() {
        let g = grid();
        let params = FluidParams::new(1.0, 1.0, 3.0, 2).unwrap();
        let consts = HypothesisConstants::new(0.0, 0.5, &params).unwrap();
        let mut s = FieldSampler::new(10);
        let y = s.smooth(&g, 2.0, 1.0);
        let inside = PotentialSpec::EnstrophyIndicator { varpi: 2.0 * enstrophy(&y) };
        let r = hypothesis_h3_probe(&inside, &y, 0.1, &consts, 1e-10).unwrap();
        assert!(r.passed && r.details["lhs"] == 0.0);
        let outside = PotentialSpec::EnstrophyIndicator { varpi: 0.2 * enstrophy(&y) };
        assert!(hypothesis_h3_probe(&outside, &y, 0.1, &consts, 1e-10).unwrap().passed);
        let sign = PotentialSpec::SignBall { kappa_c: 1.0, target: SpectralField::zeros(&g), branch: SignBranch::Proximal };
        let r = hypothesis_h3_probe(&sign, &y, 0.1, &consts, 1e-10).unwrap();
        assert!(r.details["lhs"] > 0.0);
        let p3 = FluidParams::new(1.0, 1.0, 5.0, 3).unwrap();
        assert!(HypothesisConstants::new(0.0, 0.5, &p3).is_err());
        assert!(HypothesisConstants::new(0.0, 0.0, &p3).is_ok());
    }
}

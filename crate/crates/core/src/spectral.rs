//! Linear spectral operators on the unit torus: Leray projection, the Stokes
//! operator and its resolvent, norms and dealiasing.
//!
//! With period 1 the Stokes multiplier is `(2 pi |k|)^2` per mode.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{self, inverse_unchecked, SpectralField, TOL_DIV};
use crate::grid::TorusGrid;

/// `(2 pi)^2 |k|^2` for a mode with squared wavenumber `k2`.
#[inline]
pub fn stokes_symbol(k2: f64) -> f64 {
    4.0 * PI * PI * k2
}

/// Helmholtz-Hodge projection onto divergence-free fields.
///
/// `y_k <- y_k - k (k . y_k) / |k|^2` for `k != 0`; the mean mode passes through.
pub fn leray_project(s: &SpectralField) -> SpectralField {
    let grid = s.grid().clone();
    let len = grid.spectral_len();
    let d = grid.dim();
    let mut out = s.clone();
    {
        let coeffs = out.coeffs_mut();
        for (i, m) in grid.modes().iter().enumerate() {
            if m.k2 == 0.0 {
                continue;
            }
            let mut dot = Complex64::new(0.0, 0.0);
            for c in 0..d {
                dot += coeffs[c * len + i] * m.k[c] as f64;
            }
            let f = dot / m.k2;
            for c in 0..d {
                coeffs[c * len + i] -= f * m.k[c] as f64;
            }
        }
    }
    out.set_divergence_free(true);
    out
}

/// Project unless the field is already flagged, or verifiably, divergence-free.
pub(crate) fn ensure_div_free(s: &SpectralField) -> SpectralField {
    if s.is_flagged_divergence_free() {
        return s.clone();
    }
    if s.divergence_defect() <= TOL_DIV {
        let mut out = s.clone();
        out.set_divergence_free(true);
        return out;
    }
    leray_project(s)
}

/// Stokes operator `A y = -P Delta y`.
pub fn stokes_apply(s: &SpectralField) -> SpectralField {
    let y = ensure_div_free(s);
    let mut out = y.map_modes(stokes_symbol);
    out.set_divergence_free(true);
    out
}

/// Negative Laplacian without projection.
pub fn neg_laplacian(s: &SpectralField) -> SpectralField {
    let mut out = s.map_modes(stokes_symbol);
    out.set_divergence_free(s.is_flagged_divergence_free());
    out
}

/// Stokes resolvent `(I + lam A)^{-1}`.
pub fn stokes_resolvent(s: &SpectralField, lam: f64) -> Result<SpectralField> {
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(invalid("lam", format!("must be positive and finite, got {lam}")));
    }
    let y = ensure_div_free(s);
    let mut out = y.map_modes(|k2| 1.0 / (1.0 + lam * stokes_symbol(k2)));
    out.set_divergence_free(true);
    Ok(out)
}

/// `||grad y||_H^2`, computed spectrally.
pub fn enstrophy_sq(s: &SpectralField) -> f64 {
    s.weighted_energy(stokes_symbol)
}

/// `||grad y||_H`.
pub fn enstrophy(s: &SpectralField) -> f64 {
    enstrophy_sq(s).sqrt()
}

/// `||A y||_H^2` for a divergence-free field.
pub fn stokes_norm_sq(s: &SpectralField) -> f64 {
    s.weighted_energy(|k2| stokes_symbol(k2).powi(2))
}

/// Norms of a field: spectral H and enstrophy, collocation `L^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub h_norm: f64,
    pub v_norm: f64,
    pub enstrophy: f64,
    /// `p -> ||y||_{L^p}` keyed by the textual value of `p`.
    pub lp_norms: BTreeMap<String, f64>,
}

impl NormReport {
    pub fn lp(&self, p: f64) -> Option<f64> {
        self.lp_norms.get(&p_key(p)).copied()
    }
}

pub(crate) fn p_key(p: f64) -> String {
    format!("{p}")
}

/// H, V and enstrophy norms spectrally, `L^p` norms by trapezoidal quadrature
/// on the field's own collocation grid.
pub fn norms(s: &SpectralField, ps: &[f64]) -> Result<NormReport> {
    if let Some(&p) = ps.iter().find(|&&p| !(p >= 1.0)) {
        return Err(invalid("p", format!("L^p norms need p >= 1, got {p}")));
    }
    let h2 = s.norm_sqr_h();
    let e2 = enstrophy_sq(s);
    let mut lp_norms = BTreeMap::new();
    if !ps.is_empty() {
        let phys = inverse_unchecked(s);
        let mags = pointwise_magnitude(phys.values(), s.grid().dim(), s.grid().point_count());
        for &p in ps {
            lp_norms.insert(p_key(p), lp_from_magnitudes(&mags, p));
        }
    }
    Ok(NormReport {
        h_norm: h2.sqrt(),
        v_norm: (h2 + e2).sqrt(),
        enstrophy: e2.sqrt(),
        lp_norms,
    })
}

/// `||y||_{L^p}` by quadrature on the padded product grid, consistent with the
/// pairings computed by the nonlinear operators.
pub fn lp_norm_padded(s: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid("p", format!("L^p norms need p >= 1, got {p}")));
    }
    let m = s.grid().padded_size();
    let vals = to_padded(s, m);
    let np = m.pow(s.grid().dim() as u32);
    let mags = pointwise_magnitude(&vals, s.grid().dim(), np);
    Ok(lp_from_magnitudes(&mags, p))
}

pub(crate) fn pointwise_magnitude(values: &[f64], d: usize, np: usize) -> Vec<f64> {
    (0..np)
        .map(|p| {
            (0..d)
                .map(|c| values[c * np + p].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub(crate) fn lp_from_magnitudes(mags: &[f64], p: f64) -> f64 {
    let mean = mags.iter().map(|m| m.powf(p)).sum::<f64>() / mags.len() as f64;
    mean.powf(1.0 / p)
}

/// Zero every mode with `max_i |k_i| > dealias_fraction * n / 2`.
pub fn dealias(s: &SpectralField) -> SpectralField {
    let grid = s.grid().clone();
    let cutoff = grid.dealias_cutoff();
    let len = grid.spectral_len();
    let flag = s.is_flagged_divergence_free();
    let mut out = s.clone();
    {
        let coeffs = out.coeffs_mut();
        for (i, m) in grid.modes().iter().enumerate() {
            let kmax = m.k.iter().map(|k| k.abs()).max().unwrap_or(0) as f64;
            if kmax > cutoff {
                for c in 0..grid.dim() {
                    coeffs[c * len + i] = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
    out.set_divergence_free(flag);
    out
}

/// Spectrum of `d/dx_axis` of one component, Nyquist modes zeroed.
pub(crate) fn derivative(grid: &TorusGrid, comp: &[Complex64], axis: usize) -> Vec<Complex64> {
    comp.iter()
        .zip(grid.modes())
        .map(|(v, m)| {
            if m.nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                v * Complex64::new(0.0, 2.0 * PI * m.k[axis] as f64)
            }
        })
        .collect()
}

/// Component-major samples of all components on the padded `m`-grid.
pub(crate) fn to_padded(s: &SpectralField, m: usize) -> Vec<f64> {
    let g = s.grid();
    let mut out = Vec::with_capacity(g.dim() * m.pow(g.dim() as u32));
    for c in 0..g.dim() {
        out.extend(field::component_on(g, s.component(c), m));
    }
    out
}

/// Padded samples of `d y_j / d x_i`, indexed `[i * d + j]`.
pub(crate) fn gradient_padded(s: &SpectralField, m: usize) -> Vec<Vec<f64>> {
    let g = s.grid();
    let d = g.dim();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let dj = derivative(g, s.component(j), i);
            out.push(field::component_on(g, &dj, m));
        }
    }
    out
}

/// Spectral field on `grid` from component-major padded samples.
pub(crate) fn from_padded(grid: &TorusGrid, values: &[f64], m: usize) -> SpectralField {
    let np = m.pow(grid.dim() as u32);
    let comps = (0..grid.dim())
        .map(|c| field::component_from(grid, &values[c * np..(c + 1) * np], m))
        .collect();
    field::from_components(grid, comps)
}

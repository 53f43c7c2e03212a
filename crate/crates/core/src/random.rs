//! Reproducible random smooth fields.
//!
//! Stream layout: a `ChaCha8Rng` seeded with `seed_from_u64(seed)` draws, for each
//! component in order and each stored half-spectrum mode in storage order, two
//! standard normals (real part, then imaginary part). Draws are made for every
//! stored mode, masked or not, so the layout depends only on `(d, n)`.
//! Each kept coefficient is scaled by `(1 + |k|)^(-decay)`; modes beyond the
//! cutoff and Nyquist modes are zeroed; self-conjugate planes are symmetrized.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::field::SpectralField;
use crate::grid::TorusGrid;
use crate::spectral::leray_project;

#[derive(Debug, Clone)]
pub struct FieldSampler {
    rng: ChaCha8Rng,
}

impl FieldSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Random field (not projected) with modes `max_i |k_i| <= kmax`, scaled to `||y||_H = amplitude`.
    pub fn raw_band(&mut self, grid: &TorusGrid, kmax: f64, amplitude: f64, decay: f64) -> SpectralField {
        let len = grid.spectral_len();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.dim() * len];
        for c in 0..grid.dim() {
            for (i, m) in grid.modes().iter().enumerate() {
                let re: f64 = self.rng.sample(StandardNormal);
                let im: f64 = self.rng.sample(StandardNormal);
                let kinf = m.k.iter().map(|k| k.abs()).max().unwrap_or(0) as f64;
                if m.nyquist || kinf > kmax {
                    continue;
                }
                let amp = (1.0 + m.k2.sqrt()).powf(-decay);
                coeffs[c * len + i] = Complex64::new(re, im) * amp;
            }
        }
        let mut s = SpectralField::from_coeffs(grid, coeffs).expect("sized by grid");
        s.enforce_hermitian();
        rescale(s, amplitude)
    }

    /// Random field within the dealiasing cutoff, not projected.
    pub fn raw(&mut self, grid: &TorusGrid, amplitude: f64, decay: f64) -> SpectralField {
        let kmax = grid.dealias_cutoff().floor();
        self.raw_band(grid, kmax, amplitude, decay)
    }

    /// Divergence-free random field within the dealiasing cutoff, `||y||_H = amplitude`.
    pub fn smooth(&mut self, grid: &TorusGrid, amplitude: f64, decay: f64) -> SpectralField {
        let kmax = grid.dealias_cutoff().floor();
        self.smooth_band(grid, kmax, amplitude, decay)
    }

    /// Divergence-free random field with modes `max_i |k_i| <= kmax`.
    pub fn smooth_band(&mut self, grid: &TorusGrid, kmax: f64, amplitude: f64, decay: f64) -> SpectralField {
        let raw = self.raw_band(grid, kmax, 1.0, decay);
        rescale(leray_project(&raw), amplitude)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }
}

fn rescale(s: SpectralField, amplitude: f64) -> SpectralField {
    let n = s.norm_h();
    if n == 0.0 {
        return s;
    }
    let flag = s.is_flagged_divergence_free();
    let mut out = s.scale(amplitude / n);
    out.set_divergence_free(flag);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let g = TorusGrid::new(2, 16).unwrap();
        let a = FieldSampler::new(42).smooth(&g, 1.0, 1.0);
        let b = FieldSampler::new(42).smooth(&g, 1.0, 1.0);
        let c = FieldSampler::new(43).smooth(&g, 1.0, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn smooth_fields_are_admissible() {
        let g = TorusGrid::new(3, 8).unwrap();
        let y = FieldSampler::new(1).smooth(&g, 2.5, 1.0);
        assert!((y.norm_h() - 2.5).abs() < 1e-12);
        assert!(y.hermitian_defect() < 1e-15);
        assert!(y.divergence_defect() < 1e-14);
        assert!(y.is_flagged_divergence_free());
    }
}

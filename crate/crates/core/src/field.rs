//! Velocity fields in physical and spectral representation.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{spectral_index, wavenumber, TorusGrid};

/// Relative tolerance on `|k . y_k| / |y_k|` for a field to count as divergence-free.
pub const TOL_DIV: f64 = 1e-12;

/// Tolerance on Hermitian-symmetry defects accepted by [`inverse_transform`].
pub const TOL_HERMITIAN: f64 = 1e-10;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Real `d`-vector field sampled at the `n^d` collocation points.
///
/// Values are stored component-major; within a component points are row-major
/// with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl PhysicalField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            values: vec![0.0; grid.dim() * grid.point_count()],
            grid: grid.clone(),
        }
    }

    pub fn from_values(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.dim() * grid.point_count() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.dim() * grid.point_count(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Sample `f` at every collocation point; entries beyond `d` are ignored.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let np = grid.point_count();
        let d = grid.dim();
        let mut values = vec![0.0; d * np];
        for p in 0..np {
            let v = f(grid.point(p));
            for c in 0..d {
                values[c * np + p] = v[c];
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let np = self.grid.point_count();
        &self.values[c * np..(c + 1) * np]
    }

    /// Sample of component `c` at point `p`.
    pub fn at(&self, c: usize, p: usize) -> f64 {
        self.values[c * self.grid.point_count() + p]
    }
}

/// Fourier coefficients of a real `d`-vector field in the half-spectrum layout
/// of [`TorusGrid`], component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
    divergence_free: bool,
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            coeffs: vec![ZERO; grid.dim() * grid.spectral_len()],
            grid: grid.clone(),
            divergence_free: true,
        }
    }

    pub fn from_coeffs(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.dim() * grid.spectral_len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.dim() * grid.spectral_len(),
                coeffs.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
            divergence_free: false,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        self.divergence_free = false;
        &mut self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let len = self.grid.spectral_len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        self.divergence_free = false;
        let len = self.grid.spectral_len();
        &mut self.coeffs[c * len..(c + 1) * len]
    }

    pub fn is_flagged_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub(crate) fn set_divergence_free(&mut self, flag: bool) {
        self.divergence_free = flag;
    }

    /// Coefficient vector at wavevector `k` (conjugating if only `-k` is stored).
    pub fn mode(&self, k: [i64; 3]) -> Option<[Complex64; 3]> {
        let (idx, conj) = self.grid.locate(k)?;
        let len = self.grid.spectral_len();
        let mut out = [ZERO; 3];
        for (c, slot) in out.iter_mut().enumerate().take(self.grid.dim()) {
            let v = self.coeffs[c * len + idx];
            *slot = if conj { v.conj() } else { v };
        }
        Some(out)
    }

    /// Set the coefficient at `k` and keep the stored conjugate partner consistent.
    pub fn set_mode(&mut self, k: [i64; 3], value: [Complex64; 3]) -> Result<()> {
        let (idx, conj) = self
            .grid
            .locate(k)
            .ok_or_else(|| Error::InvalidGrid(format!("wavevector {k:?} not representable")))?;
        let len = self.grid.spectral_len();
        let d = self.grid.dim();
        for (c, v) in value.iter().enumerate().take(d) {
            self.coeffs[c * len + idx] = if conj { v.conj() } else { *v };
        }
        let neg = [-k[0], -k[1], -k[2]];
        if let Some(j) = self.grid.index_of(neg) {
            if j != idx {
                for (c, v) in value.iter().enumerate().take(d) {
                    self.coeffs[c * len + j] = if conj { *v } else { v.conj() };
                }
            }
        }
        self.divergence_free = false;
        Ok(())
    }

    /// Largest violation of `c(-k) = conj(c(k))` on the self-conjugate planes.
    pub fn hermitian_defect(&self) -> f64 {
        let len = self.grid.spectral_len();
        let mut worst: f64 = 0.0;
        for (i, m) in self.grid.modes().iter().enumerate() {
            if m.weight != 1.0 {
                continue;
            }
            let neg = [-m.k[0], -m.k[1], -m.k[2]];
            let j = conj_partner(&self.grid, neg);
            for c in 0..self.grid.dim() {
                let a = self.coeffs[c * len + i];
                let b = self.coeffs[c * len + j];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }

    /// Replace each self-conjugate pair by its Hermitian average.
    pub fn enforce_hermitian(&mut self) {
        let len = self.grid.spectral_len();
        let grid = self.grid.clone();
        for (i, m) in grid.modes().iter().enumerate() {
            if m.weight != 1.0 {
                continue;
            }
            let neg = [-m.k[0], -m.k[1], -m.k[2]];
            let j = conj_partner(&grid, neg);
            if j < i {
                continue;
            }
            for c in 0..grid.dim() {
                let a = self.coeffs[c * len + i];
                let b = self.coeffs[c * len + j];
                let avg = (a + b.conj()) * 0.5;
                self.coeffs[c * len + i] = avg;
                self.coeffs[c * len + j] = avg.conj();
            }
        }
    }

    /// Zero every coefficient sitting on a Nyquist index.
    pub fn strip_nyquist(&mut self) {
        let len = self.grid.spectral_len();
        let grid = self.grid.clone();
        for (i, m) in grid.modes().iter().enumerate() {
            if m.nyquist {
                for c in 0..grid.dim() {
                    self.coeffs[c * len + i] = ZERO;
                }
            }
        }
    }

    /// `L^2` inner product `(self, other)_H` over the unit torus.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert!(self.grid == other.grid);
        let len = self.grid.spectral_len();
        let modes = self.grid.modes();
        let mut acc = 0.0;
        for c in 0..self.grid.dim() {
            let a = &self.coeffs[c * len..(c + 1) * len];
            let b = &other.coeffs[c * len..(c + 1) * len];
            for ((x, y), m) in a.iter().zip(b).zip(modes) {
                acc += m.weight * (x.re * y.re + x.im * y.im);
            }
        }
        acc
    }

    /// Weighted pairing `sum_k w(k) |y_k|^2` with a per-mode multiplier.
    pub(crate) fn weighted_energy(&self, multiplier: impl Fn(f64) -> f64) -> f64 {
        let len = self.grid.spectral_len();
        let modes = self.grid.modes();
        let mut acc = 0.0;
        for c in 0..self.grid.dim() {
            for (x, m) in self.coeffs[c * len..(c + 1) * len].iter().zip(modes) {
                acc += m.weight * multiplier(m.k2) * x.norm_sqr();
            }
        }
        acc
    }

    pub fn norm_h(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn norm_sqr_h(&self) -> f64 {
        self.inner(self)
    }

    /// Apply a real per-mode multiplier depending on `|k|^2`.
    pub fn map_modes(&self, multiplier: impl Fn(f64) -> f64) -> SpectralField {
        let len = self.grid.spectral_len();
        let modes = self.grid.modes();
        let mut out = self.clone();
        for c in 0..self.grid.dim() {
            for (x, m) in out.coeffs[c * len..(c + 1) * len].iter_mut().zip(modes) {
                *x *= multiplier(m.k2);
            }
        }
        out
    }

    /// `self + a * other`, keeping the divergence flag only if both carry it.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> SpectralField {
        debug_assert!(self.grid == other.grid);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x + y * a)
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
            divergence_free: self.divergence_free && other.divergence_free,
        }
    }

    pub fn scale(&self, a: f64) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|x| x * a).collect(),
            divergence_free: self.divergence_free,
        }
    }

    /// Largest coefficient modulus difference, componentwise.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest `|k . y_k| / |y_k|` over nonzero modes with nonzero coefficients.
    pub fn divergence_defect(&self) -> f64 {
        let len = self.grid.spectral_len();
        let d = self.grid.dim();
        let mut worst: f64 = 0.0;
        for (i, m) in self.grid.modes().iter().enumerate() {
            if m.k2 == 0.0 {
                continue;
            }
            let mut dot = ZERO;
            let mut mag = 0.0;
            for c in 0..d {
                let v = self.coeffs[c * len + i];
                dot += v * m.k[c] as f64;
                mag += v.norm_sqr();
            }
            if mag > 0.0 {
                worst = worst.max(dot.norm() / (mag.sqrt() * m.k2.sqrt()));
            }
        }
        worst
    }
}

fn conj_partner(grid: &TorusGrid, k: [i64; 3]) -> usize {
    // On self-conjugate planes `-k` is always stored, up to aliasing of the Nyquist index.
    let n = grid.n() as i64;
    let wrap = |x: i64| -> i64 {
        let w = x.rem_euclid(n);
        if w >= n / 2 {
            w - n
        } else {
            w
        }
    };
    let d = grid.dim();
    let mut kk = k;
    for c in kk.iter_mut().take(d - 1) {
        *c = wrap(*c);
    }
    kk[d - 1] = kk[d - 1].abs();
    grid.index_of(kk).expect("conjugate partner must be stored")
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scale(a)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

/// Discrete Fourier coefficients of `p` in the `exp(2 pi i k.x)` basis.
pub fn forward_transform(p: &PhysicalField) -> SpectralField {
    let grid = p.grid();
    let plan = fft::plan(grid.n());
    let mut coeffs = Vec::with_capacity(grid.dim() * grid.spectral_len());
    for c in 0..grid.dim() {
        coeffs.extend(plan.forward(grid.dim(), p.component(c)));
    }
    SpectralField {
        grid: grid.clone(),
        coeffs,
        divergence_free: false,
    }
}

/// Collocation values of the real field with coefficients `s`.
pub fn inverse_transform(s: &SpectralField) -> Result<PhysicalField> {
    let defect = s.hermitian_defect();
    let scale = s.max_abs().max(1.0);
    if defect > TOL_HERMITIAN * scale {
        return Err(Error::HermitianViolation { defect });
    }
    Ok(inverse_unchecked(s))
}

pub(crate) fn inverse_unchecked(s: &SpectralField) -> PhysicalField {
    let grid = s.grid();
    let plan = fft::plan(grid.n());
    let mut values = Vec::with_capacity(grid.dim() * grid.point_count());
    for c in 0..grid.dim() {
        values.extend(plan.inverse(grid.dim(), s.component(c)));
    }
    PhysicalField {
        grid: grid.clone(),
        values,
    }
}

/// Copy an `n`-grid half spectrum onto an `m`-grid half spectrum (`m >= n`),
/// dropping Nyquist entries of the source.
pub(crate) fn pad_component(grid: &TorusGrid, src: &[Complex64], m: usize) -> Vec<Complex64> {
    let d = grid.dim();
    let hm = m / 2 + 1;
    let mut out = vec![ZERO; m.pow(d as u32 - 1) * hm];
    for (v, mode) in src.iter().zip(grid.modes()) {
        if mode.nyquist {
            continue;
        }
        let idx = spectral_index(d, m, mode.k).expect("padded grid contains source modes");
        out[idx] = *v;
    }
    out
}

/// Truncate an `m`-grid half spectrum back to the `n`-grid, zeroing Nyquist entries.
pub(crate) fn truncate_component(grid: &TorusGrid, src: &[Complex64], m: usize) -> Vec<Complex64> {
    let d = grid.dim();
    grid.modes()
        .iter()
        .map(|mode| {
            if mode.nyquist {
                ZERO
            } else {
                src[spectral_index(d, m, mode.k).expect("padded grid contains target modes")]
            }
        })
        .collect()
}

/// Physical samples of one spectral component on the padded `m`-grid.
pub(crate) fn component_on(grid: &TorusGrid, src: &[Complex64], m: usize) -> Vec<f64> {
    fft::plan(m).inverse(grid.dim(), &pad_component(grid, src, m))
}

/// Spectral component on the `n`-grid from padded physical samples.
pub(crate) fn component_from(grid: &TorusGrid, values: &[f64], m: usize) -> Vec<Complex64> {
    truncate_component(grid, &fft::plan(m).forward(grid.dim(), values), m)
}

/// Spectrum of padded physical samples on the padded grid itself (no truncation).
pub(crate) fn padded_spectrum(dim: usize, values: &[f64], m: usize) -> Vec<Complex64> {
    fft::plan(m).forward(dim, values)
}

/// Padded physical samples from a padded spectrum.
pub(crate) fn padded_values(dim: usize, spec: &[Complex64], m: usize) -> Vec<f64> {
    fft::plan(m).inverse(dim, spec)
}

/// Wavevector of each entry in an `m`-grid half spectrum.
pub(crate) fn padded_wavevectors(dim: usize, m: usize) -> Vec<([i64; 3], bool)> {
    let h = m / 2 + 1;
    let half = (m / 2) as i64;
    let outer = m.pow(dim as u32 - 1);
    let mut out = Vec::with_capacity(outer * h);
    for o in 0..outer {
        for j in 0..h {
            let last = j as i64;
            let k = if dim == 2 {
                [wavenumber(o, m), last, 0]
            } else {
                [wavenumber(o / m, m), wavenumber(o % m, m), last]
            };
            let nyq = k[..dim - 1].iter().any(|&c| c == -half) || last == half;
            out.push((k, nyq));
        }
    }
    out
}

/// Assemble a spectral field from per-component coefficient vectors.
pub(crate) fn from_components(grid: &TorusGrid, comps: Vec<Vec<Complex64>>) -> SpectralField {
    let mut coeffs = Vec::with_capacity(grid.dim() * grid.spectral_len());
    for c in comps {
        coeffs.extend(c);
    }
    SpectralField {
        grid: grid.clone(),
        coeffs,
        divergence_free: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_physical(grid: &TorusGrid, seed: u64) -> PhysicalField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..grid.dim() * grid.point_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        PhysicalField::from_values(grid, vals).unwrap()
    }

    #[test]
    fn constant_field_has_single_mode() {
        let g = TorusGrid::new(2, 8).unwrap();
        let p = PhysicalField::from_fn(&g, |_| [0.7, -0.2, 0.0]);
        let s = forward_transform(&p);
        let zero = s.mode([0, 0, 0]).unwrap();
        assert!((zero[0] - Complex64::new(0.7, 0.0)).norm() < 1e-15);
        assert!((zero[1] - Complex64::new(-0.2, 0.0)).norm() < 1e-15);
        let energy_elsewhere = s.norm_sqr_h() - 0.7f64.powi(2) - 0.2f64.powi(2);
        assert!(energy_elsewhere.abs() < 1e-15);
    }

    #[test]
    fn sine_shear_coefficients() {
        let g = TorusGrid::new(2, 8).unwrap();
        let p = PhysicalField::from_fn(&g, |x| [(2.0 * PI * x[1]).sin(), 0.0, 0.0]);
        let s = forward_transform(&p);
        let plus = s.mode([0, 1, 0]).unwrap();
        let minus = s.mode([0, -1, 0]).unwrap();
        assert!((plus[0] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((minus[0] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        assert!(plus[1].norm() < 1e-15);
    }

    #[test]
    fn parseval_random() {
        for (d, n) in [(2, 16), (3, 8)] {
            let g = TorusGrid::new(d, n).unwrap();
            let p = random_physical(&g, 3);
            let phys = p.values().iter().map(|v| v * v).sum::<f64>() / g.point_count() as f64;
            let spec = forward_transform(&p).norm_sqr_h();
            assert!((phys - spec).abs() <= 1e-12 * phys);
        }
    }

    #[test]
    fn round_trip_random() {
        for (d, n) in [(2, 16), (3, 8)] {
            let g = TorusGrid::new(d, n).unwrap();
            let p = random_physical(&g, 9);
            let back = inverse_transform(&forward_transform(&p)).unwrap();
            let err = p
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12, "round trip error {err}");
        }
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let g = TorusGrid::new(3, 8).unwrap();
        let p = inverse_transform(&SpectralField::zeros(&g)).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_synthesis() {
        let g = TorusGrid::new(2, 8).unwrap();
        let a = Complex64::new(0.3, -0.4);
        let mut s = SpectralField::zeros(&g);
        s.set_mode([1, 0, 0], [a, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)])
            .unwrap();
        let p = inverse_transform(&s).unwrap();
        for pt in 0..g.point_count() {
            let x = g.point(pt);
            let e = Complex64::from_polar(1.0, 2.0 * PI * x[0]);
            let expect = 2.0 * (a * e).re;
            assert!((p.at(0, pt) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn hermitian_violation_is_rejected() {
        let g = TorusGrid::new(2, 8).unwrap();
        let mut s = SpectralField::zeros(&g);
        let idx = g.index_of([1, 0, 0]).unwrap();
        s.coeffs_mut()[idx] = Complex64::new(1.0, 0.0);
        assert!(matches!(inverse_transform(&s), Err(Error::HermitianViolation { .. })));
        s.enforce_hermitian();
        assert!(inverse_transform(&s).is_ok());
    }
}

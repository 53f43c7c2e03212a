//! Periodic collocation grids on the unit torus `[0,1)^d`.
//!
//! Spectral storage uses the real-to-complex half-spectrum convention: every
//! axis except the last carries the full wavenumber range `-n/2..n/2`, the
//! last axis only `0..=n/2`. Coefficients for the missing half follow from
//! `c(-k) = conj(c(k))`. On the self-conjugate planes (`k_last = 0` and
//! `k_last = n/2`) both members of a conjugate pair are stored.

use std::sync::Arc;

use crate::error::{Error, Result};

/// One stored wavevector of the half spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Integer wavevector; unused trailing entries are zero.
    pub k: [i64; 3],
    /// `|k|^2`.
    pub k2: f64,
    /// Multiplicity in the full spectrum: 1 on self-conjugate planes, 2 elsewhere.
    pub weight: f64,
    /// True if any component sits on the Nyquist index `-n/2` (or `n/2` on the half axis).
    pub nyquist: bool,
}

#[derive(Debug)]
struct ModeTable {
    modes: Vec<Mode>,
}

/// Uniform grid with `n` points per axis on the unit torus.
#[derive(Debug, Clone)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    dealias_fraction: f64,
    table: Arc<ModeTable>,
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.dealias_fraction == other.dealias_fraction
    }
}

pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        Self::with_dealias(dim, n, DEFAULT_DEALIAS_FRACTION)
    }

    pub fn with_dealias(dim: usize, n: usize, dealias_fraction: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("modes per axis must be even and >= 8, got {n}")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias fraction must lie in (0,1], got {dealias_fraction}"
            )));
        }
        let table = Arc::new(build_table(dim, n));
        Ok(Self {
            dim,
            n,
            dealias_fraction,
            table,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Length of the half axis, `n/2 + 1`.
    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    /// Number of stored coefficients per component.
    pub fn spectral_len(&self) -> usize {
        self.n.pow(self.dim as u32 - 1) * self.half()
    }

    /// Number of collocation points, `n^d`.
    pub fn point_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.table.modes
    }

    /// Size of the zero-padded product grid: at least `3n/2`, rounded up to even.
    pub fn padded_size(&self) -> usize {
        let m = (3 * self.n).div_ceil(2);
        m + m % 2
    }

    /// Largest retained `|k_i|` under the dealiasing rule.
    pub fn dealias_cutoff(&self) -> f64 {
        self.dealias_fraction * self.n as f64 / 2.0
    }

    /// Physical coordinate of collocation point `flat` (row-major, last axis fastest).
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let n = self.n;
        let h = 1.0 / n as f64;
        match self.dim {
            2 => [(flat / n) as f64 * h, (flat % n) as f64 * h, 0.0],
            _ => [
                (flat / (n * n)) as f64 * h,
                ((flat / n) % n) as f64 * h,
                (flat % n) as f64 * h,
            ],
        }
    }

    /// Storage index of wavevector `k`, or `None` if `k` is outside the stored half.
    pub fn index_of(&self, k: [i64; 3]) -> Option<usize> {
        spectral_index(self.dim, self.n, k)
    }

    /// Storage index of `k` or of `-k`, with a flag telling whether the conjugate was used.
    pub fn locate(&self, k: [i64; 3]) -> Option<(usize, bool)> {
        if let Some(i) = self.index_of(k) {
            return Some((i, false));
        }
        // On full axes -(-n/2) aliases back to -n/2.
        let half = (self.n / 2) as i64;
        let mut neg = [-k[0], -k[1], -k[2]];
        for c in neg.iter_mut().take(self.dim - 1) {
            if *c == half {
                *c = -half;
            }
        }
        self.index_of(neg).map(|i| (i, true))
    }
}

/// Wavenumber of full-axis index `j` on an axis of length `m`.
pub(crate) fn wavenumber(j: usize, m: usize) -> i64 {
    if j < m / 2 {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

/// Index on a full axis of length `m` for wavenumber `k`, if representable.
pub(crate) fn full_axis_index(k: i64, m: usize) -> Option<usize> {
    let half = (m / 2) as i64;
    if k >= -half && k < half {
        Some(if k >= 0 { k as usize } else { (k + m as i64) as usize })
    } else {
        None
    }
}

pub(crate) fn spectral_index(dim: usize, m: usize, k: [i64; 3]) -> Option<usize> {
    let h = m / 2 + 1;
    let last = k[dim - 1];
    if last < 0 || last > (m / 2) as i64 {
        return None;
    }
    let last = last as usize;
    match dim {
        2 => {
            let i0 = full_axis_index(k[0], m)?;
            Some(i0 * h + last)
        }
        _ => {
            let i0 = full_axis_index(k[0], m)?;
            let i1 = full_axis_index(k[1], m)?;
            Some((i0 * m + i1) * h + last)
        }
    }
}

fn build_table(dim: usize, n: usize) -> ModeTable {
    let h = n / 2 + 1;
    let half = (n / 2) as i64;
    let outer = n.pow(dim as u32 - 1);
    let mut modes = Vec::with_capacity(outer * h);
    for o in 0..outer {
        let (a, b) = if dim == 2 {
            (wavenumber(o, n), 0)
        } else {
            (wavenumber(o / n, n), wavenumber(o % n, n))
        };
        for j in 0..h {
            let last = j as i64;
            let k = if dim == 2 { [a, last, 0] } else { [a, b, last] };
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            let weight = if j == 0 || j == n / 2 { 1.0 } else { 2.0 };
            let nyquist = k[..dim - 1].iter().any(|&c| c == -half) || last == half;
            modes.push(Mode {
                k,
                k2,
                weight,
                nyquist,
            });
        }
    }
    ModeTable { modes }
}

//! Multi-dimensional real-to-complex transforms on cubic grids of side `m`.
//!
//! Forward transforms are normalized by `1/m^d`, so the returned values are the
//! coefficients of the trigonometric interpolant in the `exp(2 pi i k.x)` basis.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

pub(crate) struct Plan {
    m: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();

pub(crate) fn plan(m: usize) -> Arc<Plan> {
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| {
            let mut rp = RealFftPlanner::<f64>::new();
            let mut cp = FftPlanner::<f64>::new();
            Arc::new(Plan {
                m,
                r2c: rp.plan_fft_forward(m),
                c2r: rp.plan_fft_inverse(m),
                fwd: cp.plan_fft_forward(m),
                inv: cp.plan_fft_inverse(m),
            })
        })
        .clone()
}

impl Plan {
    fn half(&self) -> usize {
        self.m / 2 + 1
    }

    /// Transform `m^dim` real samples into the half spectrum.
    pub(crate) fn forward(&self, dim: usize, data: &[f64]) -> Vec<Complex64> {
        let m = self.m;
        let h = self.half();
        let rows = m.pow(dim as u32 - 1);
        debug_assert_eq!(data.len(), rows * m);
        let mut out = vec![Complex64::new(0.0, 0.0); rows * h];
        let mut line = vec![0.0; m];
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..rows {
            line.copy_from_slice(&data[r * m..(r + 1) * m]);
            self.r2c
                .process_with_scratch(&mut line, &mut out[r * h..(r + 1) * h], &mut scratch)
                .expect("r2c length mismatch");
        }
        self.full_axes(dim, &mut out, &self.fwd);
        let norm = 1.0 / (m.pow(dim as u32) as f64);
        for c in out.iter_mut() {
            *c *= norm;
        }
        out
    }

    /// Inverse of [`Plan::forward`]; imaginary parts on self-conjugate lines are discarded.
    pub(crate) fn inverse(&self, dim: usize, spec: &[Complex64]) -> Vec<f64> {
        let m = self.m;
        let h = self.half();
        let rows = m.pow(dim as u32 - 1);
        debug_assert_eq!(spec.len(), rows * h);
        let mut work = spec.to_vec();
        self.full_axes(dim, &mut work, &self.inv);
        let mut out = vec![0.0; rows * m];
        let mut scratch = self.c2r.make_scratch_vec();
        for r in 0..rows {
            let line = &mut work[r * h..(r + 1) * h];
            line[0].im = 0.0;
            line[h - 1].im = 0.0;
            self.c2r
                .process_with_scratch(line, &mut out[r * m..(r + 1) * m], &mut scratch)
                .expect("c2r length mismatch");
        }
        out
    }

    /// Complex transforms along every full (non-half) axis of a half-spectrum array.
    fn full_axes(&self, dim: usize, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        let h = self.half();
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut along = |stride: usize, starts: &mut dyn Iterator<Item = usize>| {
            for s in starts {
                for (i, v) in line.iter_mut().enumerate() {
                    *v = buf[s + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    buf[s + i * stride] = *v;
                }
            }
        };
        match dim {
            2 => {
                along(h, &mut (0..h));
            }
            _ => {
                // axis 1: stride h, one line per (i0, j)
                along(h, &mut (0..m).flat_map(|i0| (0..h).map(move |j| i0 * m * h + j)));
                // axis 0: stride m*h, one line per (i1, j)
                along(m * h, &mut (0..m * h));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_mode_2d() {
        let m = 8;
        let p = plan(m);
        let mut data = vec![0.0; m * m];
        for i0 in 0..m {
            for i1 in 0..m {
                let x0 = i0 as f64 / m as f64;
                let x1 = i1 as f64 / m as f64;
                data[i0 * m + i1] = (2.0 * PI * (x0 + 2.0 * x1)).cos();
            }
        }
        let s = p.forward(2, &data);
        let h = m / 2 + 1;
        // cos = (e^{i th} + e^{-i th})/2; k=(1,2) stored directly.
        assert!((s[h + 2] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let back = p.inverse(2, &s);
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn round_trip_3d() {
        let m = 8;
        let p = plan(m);
        let data: Vec<f64> = (0..m * m * m).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let back = p.inverse(3, &p.forward(3, &data));
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

//! Closed-form reference fields.

use std::f64::consts::PI;

use crate::field::{forward_transform, PhysicalField, SpectralField};
use crate::grid::TorusGrid;
use crate::spectral::leray_project;

/// Shear mode `y = (a sin(2 pi k x_2), 0[, 0])`.
pub fn shear_mode(grid: &TorusGrid, amplitude: f64, k: i64) -> SpectralField {
    let p = PhysicalField::from_fn(grid, |x| [amplitude * (2.0 * PI * k as f64 * x[1]).sin(), 0.0, 0.0]);
    finish(forward_transform(&p))
}

/// 2D Taylor-Green cell `a (sin 2 pi x1 cos 2 pi x2, -cos 2 pi x1 sin 2 pi x2)`,
/// extended to 3D with a zero third component and no `x_3` dependence.
pub fn taylor_green(grid: &TorusGrid, amplitude: f64) -> SpectralField {
    let p = PhysicalField::from_fn(grid, |x| {
        let (s1, c1) = (2.0 * PI * x[0]).sin_cos();
        let (s2, c2) = (2.0 * PI * x[1]).sin_cos();
        [amplitude * s1 * c2, -amplitude * c1 * s2, 0.0]
    });
    finish(forward_transform(&p))
}

/// Spatially constant field.
pub fn constant(grid: &TorusGrid, value: [f64; 3]) -> SpectralField {
    let p = PhysicalField::from_fn(grid, |_| value);
    finish(forward_transform(&p))
}

fn finish(mut s: SpectralField) -> SpectralField {
    // Round-off crumbs from the transform would otherwise leave tiny non-solenoidal parts.
    for c in s.coeffs_mut() {
        if c.norm() < 1e-15 {
            *c = num_complex::Complex64::new(0.0, 0.0);
        }
    }
    s.enforce_hermitian();
    s.strip_nyquist();
    leray_project(&s)
}

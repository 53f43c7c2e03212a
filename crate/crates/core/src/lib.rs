//! Pseudo-spectral convective Brinkman-Forchheimer (CBF) equations on the
//! periodic unit torus, perturbed by a subdifferential potential through its
//! Yosida approximation, with feedback-control applications and property checks.
//!
//! Module map:
//! - [`grid`], [`field`], [`spectral`]: torus grids, transforms, Leray projection,
//!   Stokes operator, norms, dealiasing.
//! - [`nonlinear`]: convective term, its quantization, the Forchheimer term and
//!   its Gateaux derivative, and the associated inequalities.
//! - [`potential`]: convex-set indicators, resolvents, Yosida approximations and
//!   Moreau envelopes.
//! - [`stationary`]: the Yosida-regularized stationary problem and its estimates.
//! - [`evolution`]: IMEX time stepping with energy ledgers.
//! - [`control`]: flow invariance, time-optimal and stabilizing feedback.
//! - [`harness`]: configuration, persistence and the verification runner.

pub mod checkpoint;
pub mod control;
pub mod error;
pub mod evolution;
mod fft;
pub mod field;
pub mod grid;
pub mod harness;
pub mod nonlinear;
pub mod potential;
pub mod random;
pub mod report;
pub mod spectral;
pub mod standard;
pub mod stationary;
pub mod tolerances;

pub use error::{Error, Result};
pub use field::{forward_transform, inverse_transform, PhysicalField, SpectralField};
pub use grid::TorusGrid;
pub use nonlinear::{FluidParams, QuantizationLevel};
pub use potential::PotentialSpec;
pub use report::CheckReport;

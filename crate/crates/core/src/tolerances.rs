//! The single table of numerical policy. Every check reads its tolerance from
//! here unless the caller overrides it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative divergence defect below which a field counts as solenoidal.
    pub divergence: f64,
    /// Hermitian-symmetry defect accepted by the inverse transform.
    pub hermitian: f64,
    /// Relative error for exact operator identities.
    pub identity: f64,
    /// Normalized slack for inequality checks.
    pub inequality: f64,
    /// Relative accuracy of the enstrophy-ball root find.
    pub projection_root: f64,
    /// Relative band treated as the enstrophy-ball boundary.
    pub boundary_band: f64,
    /// Allowed relative constraint violation in controlled runs.
    pub invariance: f64,
    /// Norm above which a run is declared blown up.
    pub blowup_norm: f64,
    /// Residual target of the stationary solver.
    pub stationary: f64,
    /// Maximum Picard iterations.
    pub max_iterations: usize,
    /// Slack factor on the extinction-time bound.
    pub extinction_slack: f64,
    /// Distance counted as hitting the time-optimal target.
    pub hit: f64,
    /// Torus-identity residual required at the finer grid.
    pub torus_identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            divergence: crate::field::TOL_DIV,
            hermitian: crate::field::TOL_HERMITIAN,
            identity: 1e-9,
            inequality: 1e-10,
            projection_root: 1e-12,
            boundary_band: 1e-8,
            invariance: 1e-6,
            blowup_norm: 1e12,
            stationary: 1e-10,
            max_iterations: 5000,
            extinction_slack: 0.1,
            hit: 1e-6,
            torus_identity: 1e-6,
        }
    }
}

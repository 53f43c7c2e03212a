use thiserror::Error;

/// Errors raised by the spectral core, the solvers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("Hermitian symmetry violated (max defect {defect:.3e})")]
    HermitianViolation { defect: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no global accretivity threshold: {0}")]
    NoGlobalThreshold(String),

    #[error("regime not covered: {0}")]
    UncoveredRegime(String),

    #[error("state lies outside the constraint set (enstrophy {enstrophy:.6e} > bound {bound:.6e})")]
    OutsideConstraint { enstrophy: f64, bound: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("blow-up at t = {time:.6e}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("target not reached before t_end (closest approach {closest:.3e} at t = {time:.6e})")]
    TargetMissed { closest: f64, time: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

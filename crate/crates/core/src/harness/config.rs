//! Experiment configuration in TOML.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [grid]
//! d = 2
//! n = 16
//!
//! [params]
//! mu = 0.1
//! beta = 0.5
//! r = 1.0
//!
//! [potential]
//! kind = "enstrophy-indicator"
//! varpi = 2.0
//!
//! [stepper]
//! dt = 1e-4
//! t_end = 0.1
//! lam = 1.0
//! scheme = "imex-explicit-phi"
//!
//! [initial]
//! kind = "shear"
//! amplitude = 1.0
//! k = 1
//!
//! [forcing]
//! kind = "none"
//! ```
//!
//! Fields are described by [`FieldSpec`]; `random` fields draw from the
//! experiment seed plus their own `stream` offset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::control::ControlParams;
use crate::error::{Error, Result};
use crate::evolution::{Forcing, StepperConfig};
use crate::field::SpectralField;
use crate::grid::{TorusGrid, DEFAULT_DEALIAS_FRACTION};
use crate::nonlinear::{rho_threshold, FluidParams};
use crate::potential::{PotentialSpec, SignBranch};
use crate::random::FieldSampler;
use crate::standard::{shear_mode, taylor_green};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_fraction")]
    pub dealias_fraction: f64,
}

fn default_fraction() -> f64 {
    DEFAULT_DEALIAS_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mu: f64,
    pub beta: f64,
    pub r: f64,
}

/// A field built from a closed-form recipe, a seeded random draw or a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    /// `(a sin 2 pi k x_2, 0)`.
    Shear { amplitude: f64, k: i64 },
    TaylorGreen { amplitude: f64 },
    /// Divergence-free Gaussian field with spectrum `(1 + |k|)^-decay`, scaled to `||y||_H = amplitude`.
    Random {
        amplitude: f64,
        decay: f64,
        #[serde(default)]
        kmax: Option<f64>,
        #[serde(default)]
        stream: u64,
    },
    Checkpoint { path: PathBuf },
    /// Sum of several fields.
    Sum { parts: Vec<FieldSpec> },
}

impl FieldSpec {
    pub fn build(&self, grid: &TorusGrid, seed: u64, base_dir: &Path) -> Result<SpectralField> {
        Ok(match self {
            Self::Zero => SpectralField::zeros(grid),
            Self::Shear { amplitude, k } => shear_mode(grid, *amplitude, *k),
            Self::TaylorGreen { amplitude } => taylor_green(grid, *amplitude),
            Self::Random {
                amplitude,
                decay,
                kmax,
                stream,
            } => {
                let mut sampler = FieldSampler::new(seed.wrapping_add(*stream));
                match kmax {
                    Some(k) => sampler.smooth_band(grid, *k, *amplitude, *decay),
                    None => sampler.smooth(grid, *amplitude, *decay),
                }
            }
            Self::Checkpoint { path } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let (field, _) = checkpoint::read(&full)?;
                if field.grid().dim() != grid.dim() || field.grid().n() != grid.n() {
                    return Err(Error::Config(format!("checkpoint {} does not match the grid", full.display())));
                }
                SpectralField::from_coeffs(grid, field.coeffs().to_vec())?
            }
            Self::Sum { parts } => {
                let mut acc = SpectralField::zeros(grid);
                for p in parts {
                    acc = &acc + &p.build(grid, seed, base_dir)?;
                }
                crate::spectral::leray_project(&acc)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    None,
    EnstrophyIndicator { varpi: f64 },
    SignBall {
        kappa_c: f64,
        #[serde(default)]
        target: FieldSpec,
        #[serde(default)]
        branch: SignBranch,
    },
    TikhonovIndicator { theta: f64, varpi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingConfig {
    #[default]
    None,
    Constant { field: FieldSpec },
    Ramped { field: FieldSpec, ramp_time: f64 },
}

/// Settings for the control subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub varpi: f64,
    pub kappa_c: f64,
    pub theta: f64,
    pub lam0_with_beta: bool,
    /// Target `y1` for time-optimal steering.
    pub target: FieldSpec,
    /// Equilibrium forcing `f_e` for stabilization; the equilibrium is solved from it.
    pub equilibrium_forcing: FieldSpec,
    /// Allowed constant of the `O(dt)` defect in the comparison inequality.
    pub comparison_c: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let p = ControlParams::default();
        Self {
            varpi: p.varpi,
            kappa_c: p.kappa_c,
            theta: p.theta,
            lam0_with_beta: p.lam0_with_beta,
            target: FieldSpec::Zero,
            equilibrium_forcing: FieldSpec::Zero,
            comparison_c: 10.0,
        }
    }
}

impl ControlConfig {
    pub fn params(&self) -> ControlParams {
        ControlParams {
            varpi: self.varpi,
            kappa_c: self.kappa_c,
            theta: self.theta,
            lam0_with_beta: self.lam0_with_beta,
        }
    }
}

/// Settings for the `resolvent` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventConfig {
    /// Accretivity shift `kappa`; the solve uses `kappa + 1`.
    #[serde(default)]
    pub kappa: f64,
    /// Quantization levels for a de-quantization sweep (`r <= 3` only).
    #[serde(default)]
    pub levels: Vec<f64>,
    /// Shift `eta_N` of the quantized problems.
    #[serde(default = "default_eta")]
    pub eta_n: f64,
}

fn default_eta() -> f64 {
    1.0
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            levels: Vec::new(),
            eta_n: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub stepper: StepperConfig,
    #[serde(default)]
    pub initial: FieldSpec,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub resolvent: ResolventConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Everything needed to run, with fields materialized.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: TorusGrid,
    pub params: FluidParams,
    pub potential: PotentialSpec,
    pub initial: SpectralField,
    pub forcing: Forcing,
    /// `[control] target`.
    pub target: SpectralField,
    /// `[control] equilibrium_forcing`.
    pub equilibrium_forcing: SpectralField,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn field_error(section: &str, e: Error) -> Error {
        Error::Config(format!("[{section}] {e}"))
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::with_dealias(self.grid.d, self.grid.n, self.grid.dealias_fraction).map_err(|e| Self::field_error("grid", e))
    }

    pub fn fluid_params(&self) -> Result<FluidParams> {
        FluidParams::new(self.params.mu, self.params.beta, self.params.r, self.grid.d).map_err(|e| Self::field_error("params", e))
    }

    /// Checks that need no field construction.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.fluid_params()?;
        self.stepper.validate().map_err(|e| Self::field_error("stepper", e))?;
        let p = &self.control;
        for (name, v) in [("varpi", p.varpi), ("kappa_c", p.kappa_c), ("theta", p.theta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("[control] {name} must be positive, got {v}")));
            }
        }
        match &self.potential {
            PotentialConfig::EnstrophyIndicator { varpi } | PotentialConfig::TikhonovIndicator { varpi, .. } if !(*varpi > 0.0) => {
                return Err(Error::Config(format!("[potential] varpi must be positive, got {varpi}")));
            }
            PotentialConfig::TikhonovIndicator { theta, .. } if !(*theta > 0.0) => {
                return Err(Error::Config(format!("[potential] theta must be positive, got {theta}")));
            }
            PotentialConfig::SignBall { kappa_c, .. } if !(*kappa_c > 0.0) => {
                return Err(Error::Config(format!("[potential] kappa_c must be positive, got {kappa_c}")));
            }
            _ => {}
        }
        if let ForcingConfig::Ramped { ramp_time, .. } = &self.forcing {
            if !(*ramp_time >= 0.0) {
                return Err(Error::Config(format!("[forcing] ramp_time must be >= 0, got {ramp_time}")));
            }
        }
        Ok(())
    }

    /// Regime requirement of time-optimal steering.
    pub fn validate_time_optimal(&self) -> Result<()> {
        rho_threshold(&self.fluid_params()?).map(|_| ()).map_err(|e| Self::field_error("params", e))
    }

    /// Build fields relative to `base_dir` (the directory of the config file).
    pub fn materialize(&self, base_dir: &Path) -> Result<Experiment> {
        let grid = self.grid()?;
        let params = self.fluid_params()?;
        let seed = self.seed;
        let build = |spec: &FieldSpec, section: &str| spec.build(&grid, seed, base_dir).map_err(|e| Self::field_error(section, e));
        let potential = match &self.potential {
            PotentialConfig::None => PotentialSpec::None,
            PotentialConfig::EnstrophyIndicator { varpi } => PotentialSpec::EnstrophyIndicator { varpi: *varpi },
            PotentialConfig::SignBall { kappa_c, target, branch } => PotentialSpec::SignBall {
                kappa_c: *kappa_c,
                target: build(target, "potential")?,
                branch: *branch,
            },
            PotentialConfig::TikhonovIndicator { theta, varpi } => PotentialSpec::TikhonovIndicator {
                theta: *theta,
                varpi: *varpi,
            },
        };
        let forcing = match &self.forcing {
            ForcingConfig::None => Forcing::None,
            ForcingConfig::Constant { field } => Forcing::Constant(build(field, "forcing")?),
            ForcingConfig::Ramped { field, ramp_time } => Forcing::Ramped {
                field: build(field, "forcing")?,
                ramp_time: *ramp_time,
            },
        };
        let initial = build(&self.initial, "initial")?;
        let target = build(&self.control.target, "control")?;
        let equilibrium_forcing = build(&self.control.equilibrium_forcing, "control")?;
        Ok(Experiment {
            config: self.clone(),
            grid,
            params,
            potential,
            initial,
            forcing,
            target,
            equilibrium_forcing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
seed = 3
[grid]
d = 2
n = 8
[params]
mu = 0.1
beta = 0.5
r = 1.0
[potential]
kind = "sign-ball"
kappa_c = 1.0
target = { kind = "shear", amplitude = 0.1, k = 1 }
[stepper]
dt = 1e-3
t_end = 0.01
lam = 1.0
scheme = "imex-explicit-phi"
[initial]
kind = "random"
amplitude = 0.5
decay = 1.0
[forcing]
kind = "ramped"
ramp_time = 0.5
field = { kind = "taylor-green", amplitude = 2.0 }
[tolerances]
hit = 1e-7
"#;

    #[test]
    fn round_trip_is_idempotent() {
        let a = ExperimentConfig::from_toml(TEXT).unwrap();
        let once = a.to_toml();
        let b = ExperimentConfig::from_toml(&once).unwrap();
        assert_eq!(a, b);
        assert_eq!(once, b.to_toml());
        assert_eq!(b.tolerances.hit, 1e-7);
    }

    #[test]
    fn explicit_scheme_guard_rejected_at_load() {
        let bad = TEXT.replace("lam = 1.0", "lam = 1e-3");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("[stepper]"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ExperimentConfig::from_toml(&TEXT.replace("seed = 3", "seed = 3\nbogus = 1")).is_err());
    }

    #[test]
    fn materialize_is_deterministic() {
        let c = ExperimentConfig::from_toml(TEXT).unwrap();
        let a = c.materialize(Path::new(".")).unwrap();
        let b = c.materialize(Path::new(".")).unwrap();
        assert_eq!(a.initial.coeffs(), b.initial.coeffs());
        assert!((a.initial.norm_h() - 0.5).abs() < 1e-12);
    }
}

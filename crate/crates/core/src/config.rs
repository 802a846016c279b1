//! Single-file experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{GaussianPrior, GeometryPrior, PairNoise};
use crate::error::{invalid, Result};
use crate::model::{GeometricParams, HealthState, DEFAULT_E_ENSEMBLE};
use crate::surrogate::SurrogateConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub version: u32,
    pub surrogate: SurrogateConfig,
    pub calibration: CalibrationSettings,
    pub twin: TwinSettings,
    pub planner: PlannerSettings,
    pub asset: AssetSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub geometry_prior: GeometryPrior,
    /// Prior on `e` as mean and 95% half-width.
    pub e_prior_mean: f64,
    pub e_prior_ci95: f64,
    pub pair_noise: PairNoise,
    pub n_particles: usize,
    pub n_kde_samples: usize,
    pub n_modal_samples: usize,
}

impl CalibrationSettings {
    pub fn e_prior(&self) -> GaussianPrior {
        GaussianPrior::from_ci95(self.e_prior_mean, self.e_prior_ci95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSettings {
    pub sigma_sensor: f64,
    pub n_e_samples: usize,
    /// Calibrated modulus scale the operational ensemble is drawn from.
    pub e_mean: f64,
    pub e_std: f64,
    pub horizon: usize,
    pub initial_health: HealthState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub gamma: f64,
    pub control_weight: f64,
    /// Point estimate of `e` used for the MDP reward.
    pub e_map: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSettings {
    pub truth_e: f64,
    pub noise_sigma: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            version: CONFIG_VERSION,
            surrogate: SurrogateConfig::default(),
            calibration: CalibrationSettings {
                geometry_prior: GeometryPrior {
                    mean: GeometricParams { semi_span_mm: 1000.0, chord_root_mm: 330.0, chord_tip_mm: 230.0 },
                    tolerance_mm: GeometryPrior::DRAWING_TOLERANCE_MM,
                },
                e_prior_mean: 1.0,
                e_prior_ci95: 0.05,
                pair_noise: PairNoise::default(),
                n_particles: 100_000,
                n_kde_samples: 100_000,
                n_modal_samples: 100,
            },
            twin: TwinSettings {
                sigma_sensor: 125.0,
                n_e_samples: DEFAULT_E_ENSEMBLE,
                e_mean: 1.0073,
                e_std: 0.006,
                horizon: 10,
                initial_health: HealthState::PRISTINE,
            },
            planner: PlannerSettings {
                gamma: 0.6,
                control_weight: 2.5,
                e_map: 1.0073,
                tolerance: 1e-10,
                max_iterations: 10_000,
            },
            asset: AssetSettings { truth_e: 1.0073, noise_sigma: 150.0 },
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!("unsupported config version {}", self.version)));
        }
        self.surrogate.validate()?;
        let c = &self.calibration;
        if !c.geometry_prior.mean.violations().is_empty() || !(c.geometry_prior.tolerance_mm > 0.0) {
            return Err(invalid("geometry prior must be a valid geometry with positive tolerance"));
        }
        if !(c.e_prior_mean > 0.0 && c.e_prior_ci95 > 0.0) {
            return Err(invalid("e prior needs positive mean and half-width"));
        }
        if !(c.pair_noise.force_ci95_g >= 0.0 && c.pair_noise.displacement_ci95_mm >= 0.0) {
            return Err(invalid("pair noise widths must be nonnegative"));
        }
        if c.n_particles == 0 || c.n_kde_samples < 1000 || c.n_modal_samples == 0 {
            return Err(invalid("need particles, at least 1000 KDE samples and at least one modal sample"));
        }
        let t = &self.twin;
        if !(t.sigma_sensor > 0.0) || t.n_e_samples == 0 || t.horizon == 0 {
            return Err(invalid("twin needs positive sensor sigma, ensemble size and horizon"));
        }
        if !(t.e_mean > 0.0 && t.e_std >= 0.0) {
            return Err(invalid("twin e distribution needs positive mean and nonnegative std"));
        }
        if !t.initial_health.is_on_grid() {
            return Err(invalid("initial health must lie on the grid"));
        }
        let p = &self.planner;
        if !(0.0..1.0).contains(&p.gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {}", p.gamma)));
        }
        if !(p.e_map > 0.0 && p.tolerance > 0.0 && p.max_iterations > 0) {
            return Err(invalid("planner needs positive e_map, tolerance and iteration budget"));
        }
        if !(self.asset.truth_e > 0.0 && self.asset.noise_sigma >= 0.0) {
            return Err(invalid("asset needs positive truth e and nonnegative noise"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: TwinConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

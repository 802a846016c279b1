use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::GeometricParams;

use super::sigma_from_ci95;

/// Independent Gaussian prior on each geometric parameter, centred on the
/// as-designed value with a 95% interval of `± tolerance_mm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryPrior {
    pub mean: GeometricParams,
    pub tolerance_mm: f64,
}

impl GeometryPrior {
    pub const DRAWING_TOLERANCE_MM: f64 = 2.5;

    pub fn sigma_mm(&self) -> f64 {
        sigma_from_ci95(self.tolerance_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryCalibration {
    /// All posterior mass sits on these values.
    pub posterior: GeometricParams,
    pub reward: f64,
}

/// Replaces the geometry prior by a point mass at the measurement. The reward
/// is minus the tolerance-normalized distance between measurement and design.
pub fn calibrate_geometry(
    measured: &GeometricParams,
    prior: &GeometryPrior,
) -> Result<GeometryCalibration> {
    let violations = measured.violations();
    if !violations.is_empty() {
        return Err(invalid(format!("measured geometry rejected: {}", violations.join("; "))));
    }
    if !(prior.tolerance_mm > 0.0) {
        return Err(invalid("geometry tolerance must be positive"));
    }
    let dist2: f64 = measured
        .as_array()
        .iter()
        .zip(prior.mean.as_array())
        .map(|(m, p)| ((m - p) / prior.tolerance_mm).powi(2))
        .sum();
    Ok(GeometryCalibration { posterior: *measured, reward: -dist2.sqrt() })
}

//! Closed-form stand-ins for the finite-element structural model.
//!
//! Strain is affine in the damage levels and inversely proportional to the
//! modulus scale; modal frequencies follow a lumped `sqrt(k_eff / m_eff)` law.
//! All constants live in [`SurrogateConfig`]; nothing here claims to be a
//! measurement of any real airframe.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ControlInput, HealthState, NUM_SENSORS};

/// Slope of the aggregate tip stiffness in the modulus scale factor (N/mm).
pub const STIFFNESS_SLOPE: f64 = 0.5752;
/// Stiffness of the wing at zero skin modulus (N/mm).
pub const STIFFNESS_INTERCEPT: f64 = 0.1018;

/// Aggregate tip stiffness `k` (N/mm) for modulus scale `e`.
pub fn stiffness_from_e(e: f64) -> f64 {
    STIFFNESS_SLOPE * e + STIFFNESS_INTERCEPT
}

/// Inverse of [`stiffness_from_e`].
pub fn e_from_stiffness(k: f64) -> Result<f64> {
    if !(k > STIFFNESS_INTERCEPT) {
        return Err(Error::StiffnessBelowIntercept { k });
    }
    Ok((k - STIFFNESS_INTERCEPT) / STIFFNESS_SLOPE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Strain per unit load factor at `e = 1` on the pristine wing, per sensor.
    pub baseline_strain: Vec<f64>,
    /// Amplification per unit `z_r / 100`, per sensor, for regions 1 and 2.
    pub damage_gain: Vec<[f64; 2]>,
    /// Pristine frequencies of the first two bending modes at `e = 1`, no added mass.
    pub omega0_hz: [f64; 2],
    /// `mass_weight[i] = [w_servo, w_pitot]`: modal mass participation of mode `i` per gram.
    pub mass_weight: [[f64; 2]; 2],
    /// Maximum allowable strain.
    pub epsilon_max: f64,
}

impl Default for SurrogateConfig {
    /// Shipped configuration. Sensors 0..12 sit on defect region 1 and carry
    /// the larger loads; sensors 12..24 sit on region 2. `epsilon_max` was
    /// tuned by sweeping it against the planner until the solved policy flips
    /// to 2g exactly when `z1` reaches 60 (the flip holds for roughly
    /// 1625..1725; 1675 is the centre of that window).
    fn default() -> Self {
        let baseline_strain = (0..NUM_SENSORS)
            .map(|j| {
                if j < 12 {
                    420.0 + 15.0 * j as f64
                } else {
                    300.0 - 8.0 * (j - 12) as f64
                }
            })
            .collect();
        let damage_gain = (0..NUM_SENSORS)
            .map(|j| if j < 12 { [0.8, 0.05] } else { [0.05, 0.8] })
            .collect();
        SurrogateConfig {
            baseline_strain,
            damage_gain,
            omega0_hz: [7.0, 43.0],
            mass_weight: [[2e-4, 8e-4], [6e-4, 1e-4]],
            epsilon_max: 1675.0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline_strain.len() != NUM_SENSORS || self.damage_gain.len() != NUM_SENSORS {
            return Err(invalid(format!(
                "surrogate needs {NUM_SENSORS} baseline strains and damage gains"
            )));
        }
        if self.baseline_strain.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(invalid("baseline_strain must be positive"));
        }
        if self.damage_gain.iter().flatten().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("damage_gain must be nonnegative"));
        }
        let [w1, w2] = self.omega0_hz;
        if !(w1 > 0.0 && w2 > w1 && w2.is_finite()) {
            return Err(invalid("omega0_hz must be positive and strictly increasing"));
        }
        if self.mass_weight.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("mass_weight must be nonnegative"));
        }
        if !(self.epsilon_max.is_finite() && self.epsilon_max > 0.0) {
            return Err(invalid("epsilon_max must be positive"));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SurrogateConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Predicted strain at sensor `sensor` (0-based).
    pub fn strain(&self, z: HealthState, e: f64, u: ControlInput, sensor: usize) -> Result<f64> {
        if sensor >= NUM_SENSORS {
            return Err(Error::SensorIndex { index: sensor, count: NUM_SENSORS });
        }
        Ok(self.strain_unchecked(z, e, u, sensor))
    }

    #[inline]
    fn strain_unchecked(&self, z: HealthState, e: f64, u: ControlInput, j: usize) -> f64 {
        let [a1, a2] = self.damage_gain[j];
        let amp = 1.0 + a1 * z.z1 as f64 / 100.0 + a2 * z.z2 as f64 / 100.0;
        u.load_factor() * self.baseline_strain[j] * amp / e
    }

    /// Strain at every sensor.
    pub fn strains(&self, z: HealthState, e: f64, u: ControlInput) -> [f64; NUM_SENSORS] {
        std::array::from_fn(|j| self.strain_unchecked(z, e, u, j))
    }

    pub fn max_strain(&self, z: HealthState, e: f64, u: ControlInput) -> f64 {
        self.strains(z, e, u).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Undamped frequencies (Hz) of the first two bending modes with two servo
    /// masses and one pitot mass attached.
    pub fn modal_frequencies(&self, m_servo_g: f64, m_pitot_g: f64, e: f64) -> [f64; 2] {
        std::array::from_fn(|i| {
            let [ws, wp] = self.mass_weight[i];
            self.omega0_hz[i] * e.sqrt() / (1.0 + ws * 2.0 * m_servo_g + wp * m_pitot_g).sqrt()
        })
    }

    /// Distance from structural failure given the largest predicted strain.
    pub fn r_health(&self, max_predicted_strain: f64) -> f64 {
        (self.epsilon_max - max_predicted_strain) / self.epsilon_max
    }
}

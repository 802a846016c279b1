//! Domain types shared by every stage of the twin: digital state, health grid,
//! controls, observations, beliefs, quantities of interest and rewards.
//!
//! Units are fixed crate-wide: grams, millimetres, Newtons, Hertz for measured
//! frequencies, rad/s inside the Rayleigh damping algebra, and microstrain.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of uniaxial strain gauges on the wing.
pub const NUM_SENSORS: usize = 24;
/// Percent stiffness reduction levels available in each defect region.
pub const HEALTH_LEVELS: [u8; 5] = [0, 20, 40, 60, 80];
/// Size of the joint two-region health grid.
pub const NUM_HEALTH_STATES: usize = HEALTH_LEVELS.len() * HEALTH_LEVELS.len();
/// Default size of the Young's-modulus ensemble carried by a belief.
pub const DEFAULT_E_ENSEMBLE: usize = 30;

/// Total hardware mass unaccounted for by the structural model: `2 m_servo + m_pitot`.
pub const UNMODELLED_MASS_G: f64 = 472.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricParams {
    pub semi_span_mm: f64,
    pub chord_root_mm: f64,
    pub chord_tip_mm: f64,
}

impl GeometricParams {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("semi_span_mm", self.semi_span_mm),
            ("chord_root_mm", self.chord_root_mm),
            ("chord_tip_mm", self.chord_tip_mm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be positive"));
            }
        }
        if self.chord_tip_mm > self.chord_root_mm {
            out.push("chord_tip_mm must not exceed chord_root_mm".to_string());
        }
        out
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.semi_span_mm, self.chord_root_mm, self.chord_tip_mm]
    }
}

/// Percent stiffness reduction in the two monitored defect regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HealthState {
    pub z1: u8,
    pub z2: u8,
}

impl HealthState {
    pub const PRISTINE: HealthState = HealthState { z1: 0, z2: 0 };

    pub fn new(z1: u8, z2: u8) -> Result<Self> {
        let s = HealthState { z1, z2 };
        if s.is_on_grid() {
            Ok(s)
        } else {
            Err(invalid(format!("health state ({z1}, {z2}) is not on the 0/20/40/60/80 grid")))
        }
    }

    pub fn is_on_grid(&self) -> bool {
        HEALTH_LEVELS.contains(&self.z1) && HEALTH_LEVELS.contains(&self.z2)
    }

    /// Row-major position in [`health_grid`].
    pub fn index(&self) -> usize {
        debug_assert!(self.is_on_grid());
        (self.z1 as usize / 20) * HEALTH_LEVELS.len() + self.z2 as usize / 20
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_HEALTH_STATES, "health index {index} out of range");
        HealthState {
            z1: HEALTH_LEVELS[index / HEALTH_LEVELS.len()],
            z2: HEALTH_LEVELS[index % HEALTH_LEVELS.len()],
        }
    }

    /// Componentwise order: `self` is no more damaged than `other` in either region.
    pub fn le_componentwise(&self, other: &HealthState) -> bool {
        self.z1 <= other.z1 && self.z2 <= other.z2
    }
}

/// The 25 health states in row-major order (z1 outer, z2 inner).
pub fn health_grid() -> Vec<HealthState> {
    (0..NUM_HEALTH_STATES).map(HealthState::from_index).collect()
}

/// Load factor of the next turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlInput {
    #[serde(rename = "2g")]
    TwoG,
    #[serde(rename = "3g")]
    ThreeG,
}

impl ControlInput {
    pub const ALL: [ControlInput; 2] = [ControlInput::TwoG, ControlInput::ThreeG];

    pub fn load_factor(self) -> f64 {
        match self {
            ControlInput::TwoG => 2.0,
            ControlInput::ThreeG => 3.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ControlInput::TwoG => 0,
            ControlInput::ThreeG => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ControlInput::TwoG => "2g",
            ControlInput::ThreeG => "3g",
        }
    }
}

impl std::fmt::Display for ControlInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ControlInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2g" => Ok(ControlInput::TwoG),
            "3g" => Ok(ControlInput::ThreeG),
            other => Err(invalid(format!("unknown load factor {other:?} (expected 2g or 3g)"))),
        }
    }
}

/// One timestep of strain gauge readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: u64,
    pub strains_microstrain: Vec<f64>,
}

impl Observation {
    pub fn new(t: u64, strains_microstrain: Vec<f64>) -> Result<Self> {
        let obs = Observation { t, strains_microstrain };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strains_microstrain.len() != NUM_SENSORS {
            return Err(invalid(format!(
                "observation at t={} has {} strains, expected {NUM_SENSORS}",
                self.t,
                self.strains_microstrain.len()
            )));
        }
        if self.strains_microstrain.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("observation at t={} has non-finite strain", self.t)));
        }
        Ok(())
    }
}

/// Probability table over the health grid plus the Young's-modulus ensemble
/// through which strain predictions are pushed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthBelief {
    /// Row-major over [`health_grid`].
    pub probs: Vec<f64>,
    pub e_samples: Vec<f64>,
}

impl HealthBelief {
    /// Normalizes `weights` into a belief. Weights must be finite, nonnegative
    /// and not all zero.
    pub fn new(weights: Vec<f64>, e_samples: Vec<f64>) -> Result<Self> {
        if weights.len() != NUM_HEALTH_STATES {
            return Err(invalid(format!(
                "belief needs {NUM_HEALTH_STATES} weights, got {}",
                weights.len()
            )));
        }
        if e_samples.is_empty() {
            return Err(invalid("belief needs at least one e sample"));
        }
        if e_samples.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid("e samples must be finite and positive"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("belief weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::AnnihilatedSupport);
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(HealthBelief { probs, e_samples })
    }

    pub fn uniform(e_samples: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0; NUM_HEALTH_STATES], e_samples)
    }

    pub fn delta(state: HealthState, e_samples: Vec<f64>) -> Result<Self> {
        let mut w = vec![0.0; NUM_HEALTH_STATES];
        w[state.index()] = 1.0;
        Self::new(w, e_samples)
    }

    pub fn prob(&self, state: HealthState) -> f64 {
        self.probs[state.index()]
    }

    /// Most probable grid state; ties go to the lowest grid index.
    pub fn map_state(&self) -> HealthState {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        HealthState::from_index(best)
    }

    pub fn summary(&self) -> MarginalSummary {
        MarginalSummary::of(&self.probs)
    }
}

/// Moments of the two region marginals of a health distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub map_z1: u8,
    pub map_z2: u8,
    pub mean_z1: f64,
    pub mean_z2: f64,
    pub std_z1: f64,
    pub std_z2: f64,
}

impl MarginalSummary {
    pub fn of(probs: &[f64]) -> Self {
        let mut best = 0;
        let (mut m1, mut m2, mut s1, mut s2) = (0.0, 0.0, 0.0, 0.0);
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
            let z = HealthState::from_index(i);
            m1 += p * z.z1 as f64;
            m2 += p * z.z2 as f64;
            s1 += p * (z.z1 as f64).powi(2);
            s2 += p * (z.z2 as f64).powi(2);
        }
        let map = HealthState::from_index(best);
        MarginalSummary {
            map_z1: map.z1,
            map_z2: map.z2,
            mean_z1: m1,
            mean_z2: m2,
            std_z1: (s1 - m1 * m1).max(0.0).sqrt(),
            std_z2: (s2 - m2 * m2).max(0.0).sqrt(),
        }
    }
}

/// Weighted-sample representation of predicted strain at every sensor.
/// Sample `k` carries weight `weights[k]`, was computed under load `loads[k]`
/// and predicts the 24 strains `strains_microstrain[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoIDistribution {
    pub weights: Vec<f64>,
    pub loads: Vec<ControlInput>,
    pub strains_microstrain: Vec<Vec<f64>>,
}

impl QoIDistribution {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sensor_moments(&self, sensor: usize) -> Moments {
        Moments::weighted(
            self.weights
                .iter()
                .zip(&self.strains_microstrain)
                .map(|(w, s)| (s[sensor], *w)),
        )
    }

    pub fn summary(&self) -> QoISummary {
        let (mean, std) = (0..NUM_SENSORS)
            .map(|j| {
                let m = self.sensor_moments(j);
                (m.mean, m.std)
            })
            .unzip();
        QoISummary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoISummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Reward terms for one support point of the joint (health, e) distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    /// Absent for predicted timesteps, which have no observation.
    pub r_error: Option<f64>,
    pub r_health: f64,
    pub r_control: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn weighted(values: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (v, w) in values {
            sw += w;
            s1 += w * v;
            s2 += w * v * v;
        }
        if sw <= 0.0 {
            return Moments { mean: f64::NAN, std: f64::NAN };
        }
        let mean = s1 / sw;
        Moments { mean, std: (s2 / sw - mean * mean).max(0.0).sqrt() }
    }
}

/// Weighted mean and std of each reward term over a joint support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub r_error: Option<Moments>,
    pub r_health: Moments,
    pub r_control: Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub value: f64,
    pub weight: f64,
}

/// Weighted-particle posterior over a scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPosterior {
    pub mean: f64,
    pub std: f64,
    pub ci95: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<Vec<Particle>>,
}

/// Asset-specific parameter vector of the structural models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitalState {
    pub g: GeometricParams,
    pub e: f64,
    pub m_servo_g: f64,
    pub m_pitot_g: f64,
    pub alpha: f64,
    pub beta: f64,
    pub z: HealthState,
}

/// Every invariant violation of `d`; empty means the state is valid.
pub fn validate_state(d: &DigitalState) -> Vec<String> {
    let mut out = d.g.violations();
    if !(d.e.is_finite() && d.e > 0.0) {
        out.push("e must be positive".to_string());
    }
    for (name, v) in [
        ("m_servo_g", d.m_servo_g),
        ("m_pitot_g", d.m_pitot_g),
        ("alpha", d.alpha),
        ("beta", d.beta),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            out.push(format!("{name} must be nonnegative"));
        }
    }
    if !d.z.is_on_grid() {
        out.push(format!("health state ({}, {}) is not on the grid", d.z.z1, d.z.z2));
    }
    out
}

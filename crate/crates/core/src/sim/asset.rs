use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::model::{ControlInput, Observation};
use crate::rng;
use crate::surrogate::SurrogateConfig;

use super::schedule::GroundTruthSchedule;
use super::wire::{Connection, WireMessage};

const ASSET_STREAM: u64 = 0x4153_5345_5400_0005;

/// Strain the physical wing would report at step `t` while flying `u`: the
/// surrogate at the scheduled health and true modulus, plus independent
/// Gaussian noise drawn from a stream keyed by `(seed, t)` in sensor order.
pub fn asset_step(
    cfg: &SurrogateConfig,
    schedule: &GroundTruthSchedule,
    t: u64,
    u: ControlInput,
    truth_e: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Observation> {
    let z = schedule.health_at(t)?;
    let truth = cfg.strains(z, truth_e, u);
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid("noise sigma must be nonnegative"));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|_| invalid("noise sigma must be finite"))?;
    let mut rng = rng::stream(rng::mix(seed, t), ASSET_STREAM);
    let strains = truth.iter().map(|s| s + noise.sample(&mut rng)).collect();
    Observation::new(t, strains)
}

#[derive(Debug, Clone)]
pub struct AssetEndpoint {
    pub surrogate: SurrogateConfig,
    pub schedule: GroundTruthSchedule,
    pub truth_e: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Last step to report.
    pub last_t: u64,
}

impl AssetEndpoint {
    /// Event loop: every `Control{t}` is answered by `Sensor{t + 1}` flown
    /// under that control, until `last_t` has been reported; returns on
    /// `Shutdown`.
    pub fn run(&self, conn: &mut dyn Connection) -> Result<()> {
        loop {
            match conn.recv()? {
                WireMessage::Control { t, load_factor } => {
                    let next = t + 1;
                    if next <= self.last_t {
                        let obs = asset_step(&self.surrogate, &self.schedule, next, load_factor, self.truth_e, self.noise_sigma, self.seed)?;
                        conn.send(&WireMessage::Sensor { t: next, strain: obs.strains_microstrain })?;
                    }
                }
                WireMessage::Shutdown => return Ok(()),
                WireMessage::Sensor { t, .. } => {
                    return Err(crate::error::Error::Frame(format!("asset received a sensor frame (t = {t})")))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HealthState;

    #[test]
    fn zero_noise_is_surrogate_truth() {
        let cfg = SurrogateConfig::default();
        let s = GroundTruthSchedule::default_mission();
        let o = asset_step(&cfg, &s, 40, ControlInput::ThreeG, 1.0073, 0.0, 9).unwrap();
        let truth = cfg.strains(HealthState::new(60, 60).unwrap(), 1.0073, ControlInput::ThreeG);
        assert_eq!(o.strains_microstrain, truth.to_vec());
    }

    #[test]
    fn deterministic_in_seed_and_t() {
        let cfg = SurrogateConfig::default();
        let s = GroundTruthSchedule::default_mission();
        let a = asset_step(&cfg, &s, 10, ControlInput::TwoG, 1.0073, 150.0, 1).unwrap();
        let b = asset_step(&cfg, &s, 10, ControlInput::TwoG, 1.0073, 150.0, 1).unwrap();
        let c = asset_step(&cfg, &s, 11, ControlInput::TwoG, 1.0073, 150.0, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.strains_microstrain, c.strains_microstrain);
    }

    #[test]
    fn noise_std_matches_setting() {
        let cfg = SurrogateConfig::default();
        let s = GroundTruthSchedule::default_mission();
        let truth = cfg.strain(HealthState::PRISTINE, 1.0073, ControlInput::TwoG, 5).unwrap();
        let xs: Vec<f64> = (0..10_000u64)
            .map(|seed| asset_step(&cfg, &s, 4, ControlInput::TwoG, 1.0073, 150.0, seed).unwrap().strains_microstrain[5] - truth)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((sd - 150.0).abs() < 5.0, "sd = {sd}");
    }

    #[test]
    fn outside_schedule_rejected() {
        let cfg = SurrogateConfig::default();
        let s = GroundTruthSchedule::default_mission();
        assert!(asset_step(&cfg, &s, 2, ControlInput::TwoG, 1.0, 150.0, 0).is_err());
    }
}

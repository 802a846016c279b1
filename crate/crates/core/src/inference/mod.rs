//! Exact inference over the 25-state health chain: factor construction,
//! forward filtering, forward-backward smoothing and policy-driven prediction.

mod factors;
mod smoothing;

pub use factors::{
    assimilation_likelihood, assimilation_log_likelihood, build_transition, ensemble_log_likelihood,
    evaluate_rewards, normalize_log_weights, qoi_distribution, r_control, r_error, reward_record,
    transition_with_probability, worsen_probability, TransitionTable,
};
pub use smoothing::{
    History, InferenceModel, Marginals, PredictedStep, Prediction, SmoothedStep, SmoothingResult,
};

#[cfg(test)]
pub(crate) mod tests_support {
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::model::{ControlInput, HealthBelief, HealthState, Observation};
    use crate::rng::TwinRng;

    /// A short history driven by random controls along a random monotone truth path.
    pub fn random_history(m: &InferenceModel, rng: &mut TwinRng, len: usize) -> History {
        let noise = Normal::new(0.0, 150.0).unwrap();
        let mut z = HealthState::from_index(rng.random_range(0..25));
        let initial_load = if rng.random::<bool>() { ControlInput::ThreeG } else { ControlInput::TwoG };
        let mut load = initial_load;
        let mut controls = Vec::new();
        let mut observations = Vec::new();
        for t in 0..len {
            if t > 0 {
                load = if rng.random::<bool>() { ControlInput::ThreeG } else { ControlInput::TwoG };
                controls.push(load);
                let step = |v: u8, rng: &mut TwinRng| if v < 80 && rng.random::<f64>() < 0.3 { v + 20 } else { v };
                z = HealthState::new(step(z.z1, rng), step(z.z2, rng)).unwrap();
            }
            let strains = m.surrogate.strains(z, 1.0073, load).map(|s| s + noise.sample(rng)).to_vec();
            observations.push(Observation::new(t as u64, strains).unwrap());
        }
        History {
            initial: HealthBelief::uniform(vec![0.995, 1.0073, 1.02]).unwrap(),
            initial_load,
            controls,
            observations,
        }
    }
}

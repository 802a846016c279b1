use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::TwinConfig;
use crate::error::{invalid, Error, Result};
use crate::model::{
    ControlInput, HealthBelief, HealthState, MarginalSummary, Observation, QoIDistribution,
    QoISummary, RewardSummary, NUM_HEALTH_STATES,
};
use crate::surrogate::SurrogateConfig;

use super::factors::{
    assimilation_log_likelihood, build_transition, evaluate_rewards, normalize_log_weights,
    qoi_distribution, TransitionTable,
};

/// Operational-phase model: surrogate, sensor noise and the two transition tables.
#[derive(Debug, Clone)]
pub struct InferenceModel {
    pub surrogate: SurrogateConfig,
    pub sigma_sensor: f64,
    transitions: [TransitionTable; 2],
}

/// Observations `o_0..o_T` and the controls `u_0..u_{T-1}` issued between them.
///
/// Control `u_t` is chosen after `o_t` is assimilated; it drives the health
/// transition into step `t + 1` and sets the load under which `o_{t+1}` is
/// recorded. `o_0` is recorded under `initial_load`, and `initial` is the
/// belief over the health at step 0 before `o_0` is seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial: HealthBelief,
    pub initial_load: ControlInput,
    pub controls: Vec<ControlInput>,
    pub observations: Vec<Observation>,
}

impl History {
    pub fn validate(&self) -> Result<()> {
        if self.observations.len() != self.controls.len() + 1 {
            return Err(Error::HistoryMismatch {
                controls: self.controls.len(),
                observations: self.observations.len(),
            });
        }
        Ok(())
    }

    /// Load in effect while observation `t` was recorded.
    pub fn load(&self, t: usize) -> ControlInput {
        if t == 0 {
            self.initial_load
        } else {
            self.controls[t - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedStep {
    pub t: u64,
    pub load: ControlInput,
    pub filtered: Vec<f64>,
    pub belief: HealthBelief,
    pub marginal: MarginalSummary,
    pub qoi: QoIDistribution,
    pub qoi_summary: QoISummary,
    pub rewards: RewardSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingResult {
    pub steps: Vec<SmoothedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedStep {
    pub t: u64,
    pub probs: Vec<f64>,
    pub marginal: MarginalSummary,
    /// Probability that each control (2g, 3g) is in effect during this step.
    pub control_probs: [f64; 2],
    pub qoi_summary: QoISummary,
    pub rewards: RewardSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub steps: Vec<PredictedStep>,
}

/// One probability table over the grid per timestep.
pub type Marginals = Vec<Vec<f64>>;

fn ln_probs(p: &[f64]) -> Vec<f64> {
    p.iter().map(|x| x.ln()).collect()
}

impl InferenceModel {
    pub fn new(surrogate: SurrogateConfig, sigma_sensor: f64) -> Result<Self> {
        surrogate.validate()?;
        if !(sigma_sensor > 0.0 && sigma_sensor.is_finite()) {
            return Err(invalid("sensor sigma must be positive"));
        }
        Ok(InferenceModel {
            surrogate,
            sigma_sensor,
            transitions: ControlInput::ALL.map(build_transition),
        })
    }

    pub fn from_config(cfg: &TwinConfig) -> Result<Self> {
        Self::new(cfg.surrogate.clone(), cfg.twin.sigma_sensor)
    }

    /// Replaces the transition tables, e.g. with hypothetical dynamics.
    pub fn with_transitions(mut self, two_g: TransitionTable, three_g: TransitionTable) -> Self {
        self.transitions = [two_g, three_g];
        self
    }

    pub fn transition(&self, u: ControlInput) -> &TransitionTable {
        &self.transitions[u.index()]
    }

    pub fn log_likelihood(&self, obs: &Observation, load: ControlInput, e_samples: &[f64]) -> Result<Vec<f64>> {
        assimilation_log_likelihood(&self.surrogate, obs, load, e_samples, self.sigma_sensor)
    }

    /// Bayes correction of `prior` by `obs`, combined in log space.
    pub fn assimilate(&self, prior: &HealthBelief, load: ControlInput, obs: &Observation) -> Result<HealthBelief> {
        let log_l = self.log_likelihood(obs, load, &prior.e_samples)?;
        self.combine(&prior.probs, &log_l, &prior.e_samples)
    }

    fn combine(&self, probs: &[f64], log_l: &[f64], e_samples: &[f64]) -> Result<HealthBelief> {
        let log_post: Vec<f64> = ln_probs(probs).iter().zip(log_l).map(|(a, b)| a + b).collect();
        let post = normalize_log_weights(&log_post).map_err(|_| Error::AnnihilatedSupport)?;
        HealthBelief::new(post, e_samples.to_vec())
    }

    /// Predictor-corrector step: propagate through the dynamics of the control
    /// issued at the previous step, then assimilate `obs`, which was recorded
    /// under that same load.
    pub fn filter_step(&self, prior: &HealthBelief, u_prev: ControlInput, obs: &Observation) -> Result<HealthBelief> {
        let predicted = self.transition(u_prev).propagate(&prior.probs);
        let log_l = self.log_likelihood(obs, u_prev, &prior.e_samples)?;
        self.combine(&predicted, &log_l, &prior.e_samples)
    }

    /// Forward-backward pass returning filtered and smoothed marginals.
    pub fn smooth_marginals(&self, history: &History) -> Result<(Marginals, Marginals)> {
        history.validate()?;
        let e = &history.initial.e_samples;
        let log_l: Vec<Vec<f64>> = history
            .observations
            .iter()
            .enumerate()
            .map(|(t, o)| self.log_likelihood(o, history.load(t), e))
            .collect::<Result<_>>()?;
        self.forward_backward(&history.initial.probs, &history.controls, &log_l)
    }

    /// Forward-backward from precomputed per-step log-likelihoods;
    /// `controls[t]` links step `t` to step `t + 1`.
    pub fn forward_backward(
        &self,
        initial: &[f64],
        controls: &[ControlInput],
        log_l: &[Vec<f64>],
    ) -> Result<(Marginals, Marginals)> {
        if log_l.len() != controls.len() + 1 {
            return Err(Error::HistoryMismatch { controls: controls.len(), observations: log_l.len() });
        }
        let posterior = |probs: &[f64], log_l: &[f64]| -> Result<Vec<f64>> {
            let log_post: Vec<f64> = ln_probs(probs).iter().zip(log_l).map(|(a, b)| a + b).collect();
            normalize_log_weights(&log_post).map_err(|_| Error::AnnihilatedSupport)
        };
        let mut filtered: Vec<Vec<f64>> = Vec::with_capacity(log_l.len());
        filtered.push(posterior(initial, &log_l[0])?);
        for t in 1..log_l.len() {
            let predicted = self.transition(controls[t - 1]).propagate(&filtered[t - 1]);
            filtered.push(posterior(&predicted, &log_l[t])?);
        }

        // Backward messages in log space: β_t(z) = Σ_z' T(z, z') L_{t+1}(z') β_{t+1}(z').
        let last = log_l.len() - 1;
        let mut smoothed = vec![Vec::new(); log_l.len()];
        smoothed[last] = filtered[last].clone();
        let mut log_beta = vec![0.0; NUM_HEALTH_STATES];
        for t in (0..last).rev() {
            let table = self.transition(controls[t]);
            let msg: Vec<f64> = (0..NUM_HEALTH_STATES).map(|z2| log_l[t + 1][z2] + log_beta[z2]).collect();
            let shift = msg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            log_beta = table
                .rows
                .iter()
                .map(|row| {
                    let s: f64 = row.iter().zip(&msg).map(|(p, m)| p * (m - shift).exp()).sum();
                    s.ln()
                })
                .collect();
            smoothed[t] = posterior(&filtered[t], &log_beta)?;
        }
        Ok((filtered, smoothed))
    }

    /// Smoothed marginals plus QoI and reward summaries at every step.
    pub fn smooth(&self, history: &History) -> Result<SmoothingResult> {
        let (filtered, smoothed) = self.smooth_marginals(history)?;
        let e = &history.initial.e_samples;
        let steps = filtered
            .into_iter()
            .zip(smoothed)
            .enumerate()
            .map(|(t, (f, s))| {
                let obs = &history.observations[t];
                self.step_summary(obs.t, history.load(t), f, HealthBelief::new(s, e.clone())?, Some(obs))
            })
            .collect::<Result<_>>()?;
        Ok(SmoothingResult { steps })
    }

    pub(crate) fn step_summary(
        &self,
        t: u64,
        load: ControlInput,
        filtered: Vec<f64>,
        belief: HealthBelief,
        obs: Option<&Observation>,
    ) -> Result<SmoothedStep> {
        let qoi = qoi_distribution(&self.surrogate, &[(load, &belief.probs)], &belief.e_samples);
        let rewards = evaluate_rewards(&self.surrogate, obs, &qoi, self.sigma_sensor);
        Ok(SmoothedStep {
            t,
            load,
            filtered,
            marginal: belief.summary(),
            qoi_summary: qoi.summary(),
            belief,
            qoi,
            rewards,
        })
    }

    /// Propagates `belief` (at step `t_c`) `horizon` steps ahead. At every
    /// step the control is the policy's choice for the state the wing is in,
    /// so the load carried by each future QoI sample depends on where its
    /// path came from. No observations exist, hence no `r_error`.
    pub fn predict(
        &self,
        belief: &HealthBelief,
        t_c: u64,
        policy: impl Fn(HealthState) -> ControlInput,
        horizon: usize,
    ) -> Result<Prediction> {
        if horizon == 0 {
            return Err(invalid("prediction horizon must be at least one step"));
        }
        let controls: Vec<ControlInput> = (0..NUM_HEALTH_STATES).map(|i| policy(HealthState::from_index(i))).collect();
        let mut probs = belief.probs.clone();
        let mut steps = Vec::with_capacity(horizon);
        for h in 1..=horizon {
            let mut by_control = [vec![0.0; NUM_HEALTH_STATES], vec![0.0; NUM_HEALTH_STATES]];
            for (i, &p) in probs.iter().enumerate() {
                by_control[controls[i].index()][i] = p;
            }
            let control_probs = [by_control[0].iter().sum(), by_control[1].iter().sum()];
            let next_by_control: [Vec<f64>; 2] =
                std::array::from_fn(|k| self.transition(ControlInput::ALL[k]).propagate(&by_control[k]));
            let next: Vec<f64> = (0..NUM_HEALTH_STATES).map(|i| next_by_control[0][i] + next_by_control[1][i]).collect();
            let components: Vec<(ControlInput, &[f64])> = ControlInput::ALL
                .iter()
                .zip(&next_by_control)
                .filter(|(_, w)| w.iter().any(|x| *x > 0.0))
                .map(|(u, w)| (*u, w.as_slice()))
                .collect();
            let qoi = qoi_distribution(&self.surrogate, &components, &belief.e_samples);
            steps.push(PredictedStep {
                t: t_c + h as u64,
                marginal: MarginalSummary::of(&next),
                control_probs,
                qoi_summary: qoi.summary(),
                rewards: evaluate_rewards(&self.surrogate, None, &qoi, self.sigma_sensor),
                probs: next.clone(),
            });
            probs = next;
        }
        Ok(Prediction { steps })
    }
}

impl SmoothingResult {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    /// One row per step: MAP health, marginal moments and reward summaries.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t", "load", "map_z1", "map_z2", "mean_z1", "mean_z2", "std_z1", "std_z2",
            "r_error_mean", "r_error_std", "r_health_mean", "r_health_std", "r_control_mean", "r_control_std",
        ])?;
        for s in &self.steps {
            let m = &s.marginal;
            let (em, es) = s.rewards.r_error.map_or((String::new(), String::new()), |r| (r.mean.to_string(), r.std.to_string()));
            w.write_record([
                s.t.to_string(),
                s.load.to_string(),
                m.map_z1.to_string(),
                m.map_z2.to_string(),
                m.mean_z1.to_string(),
                m.mean_z2.to_string(),
                m.std_z1.to_string(),
                m.std_z2.to_string(),
                em,
                es,
                s.rewards.r_health.mean.to_string(),
                s.rewards.r_health.std.to_string(),
                s.rewards.r_control.mean.to_string(),
                s.rewards.r_control.std.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::factors::transition_with_probability;
    use proptest::prelude::*;

    fn st(z1: u8, z2: u8) -> HealthState {
        HealthState::new(z1, z2).unwrap()
    }

    fn model() -> InferenceModel {
        InferenceModel::new(SurrogateConfig::default(), 125.0).unwrap()
    }

    fn threshold(z: HealthState) -> ControlInput {
        if z.z1 >= 60 {
            ControlInput::TwoG
        } else {
            ControlInput::ThreeG
        }
    }

    #[test]
    fn neutral_factors_leave_prior_unchanged() {
        let m = model().with_transitions(
            transition_with_probability(ControlInput::TwoG, 0.0),
            transition_with_probability(ControlInput::ThreeG, 0.0),
        );
        let prior = HealthBelief::new((1..=25).map(f64::from).collect(), vec![1.0]).unwrap();
        let flat = vec![-3.0; 25];
        let post = m.combine(&m.transition(ControlInput::TwoG).propagate(&prior.probs), &flat, &prior.e_samples).unwrap();
        for (a, b) in post.probs.iter().zip(&prior.probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_prior_follows_sharp_likelihood() {
        let m = model();
        let z = st(40, 20);
        let obs = Observation::new(4, m.surrogate.strains(z, 1.0, ControlInput::ThreeG).to_vec()).unwrap();
        let post = m.assimilate(&HealthBelief::uniform(vec![1.0]).unwrap(), ControlInput::ThreeG, &obs).unwrap();
        assert_eq!(post.map_state(), z);
        assert!(post.prob(z) > 0.99);
    }

    #[test]
    fn mismatched_history_rejected() {
        let h = History {
            initial: HealthBelief::uniform(vec![1.0]).unwrap(),
            initial_load: ControlInput::TwoG,
            controls: vec![ControlInput::TwoG],
            observations: vec![Observation::new(0, vec![500.0; 24]).unwrap()],
        };
        assert!(matches!(model().smooth(&h), Err(Error::HistoryMismatch { controls: 1, observations: 1 })));
    }

    #[test]
    fn single_step_smoothing_is_filtering() {
        let m = model();
        let obs = Observation::new(4, m.surrogate.strains(st(20, 0), 1.0, ControlInput::TwoG).to_vec()).unwrap();
        let prior = HealthBelief::uniform(vec![0.99, 1.01]).unwrap();
        let h = History { initial: prior.clone(), initial_load: ControlInput::TwoG, controls: vec![], observations: vec![obs.clone()] };
        let r = m.smooth(&h).unwrap();
        let f = m.assimilate(&prior, ControlInput::TwoG, &obs).unwrap();
        assert_eq!(r.steps.len(), 1);
        for (a, b) in r.steps[0].belief.probs.iter().zip(&f.probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_prediction_matches_transition_row() {
        let m = model();
        let b = HealthBelief::delta(HealthState::PRISTINE, vec![1.0]).unwrap();
        let p = m.predict(&b, 10, |_| ControlInput::TwoG, 1).unwrap();
        let s = &p.steps[0];
        assert_eq!(s.t, 11);
        assert!((s.probs[st(0, 0).index()] - 0.9025).abs() < 1e-15);
        assert!((s.probs[st(20, 0).index()] - 0.0475).abs() < 1e-15);
        assert!((s.probs[st(0, 20).index()] - 0.0475).abs() < 1e-15);
        assert!((s.probs[st(20, 20).index()] - 0.0025).abs() < 1e-15);
        assert!(s.rewards.r_error.is_none());
        assert_eq!(s.control_probs, [1.0, 0.0]);
    }

    #[test]
    fn absorbing_prediction_is_constant() {
        let m = model();
        let b = HealthBelief::delta(st(80, 80), vec![1.0, 1.02]).unwrap();
        let p = m.predict(&b, 0, threshold, 10).unwrap();
        assert_eq!(p.steps.len(), 10);
        for s in &p.steps {
            assert_eq!(s.probs, b.probs);
            assert_eq!(s.rewards.r_control.mean, -0.1);
        }
    }

    fn random_belief(weights: &[f64]) -> HealthBelief {
        HealthBelief::new(weights.to_vec(), vec![0.99, 1.0073]).unwrap()
    }

    proptest! {
        #[test]
        fn chapman_kolmogorov(weights in proptest::collection::vec(0.0f64..1.0, 25), h in 1usize..5, k in 1usize..5) {
            prop_assume!(weights.iter().sum::<f64>() > 0.1);
            let m = model();
            let b = random_belief(&weights);
            let full = m.predict(&b, 0, threshold, h + k).unwrap();
            let first = m.predict(&b, 0, threshold, h).unwrap();
            let mid = HealthBelief::new(first.steps[h - 1].probs.clone(), b.e_samples.clone()).unwrap();
            let second = m.predict(&mid, h as u64, threshold, k).unwrap();
            for (a, c) in full.steps[h + k - 1].probs.iter().zip(&second.steps[k - 1].probs) {
                prop_assert!((a - c).abs() < 1e-12);
            }
            prop_assert_eq!(full.steps[h + k - 1].t, second.steps[k - 1].t);
        }

        #[test]
        fn filtered_and_smoothed_normalized(seed in 0u64..200) {
            let m = model();
            let mut rng = crate::rng::stream(seed, 99);
            let h = crate::inference::tests_support::random_history(&m, &mut rng, 4);
            let (f, s) = m.smooth_marginals(&h).unwrap();
            for p in f.iter().chain(&s) {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            for (a, b) in f.last().unwrap().iter().zip(s.last().unwrap()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let m = model();
        let mut rng = crate::rng::stream(3, 99);
        let h = crate::inference::tests_support::random_history(&m, &mut rng, 3);
        let r = m.smooth(&h).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("t,load,map_z1,map_z2"));
    }
}

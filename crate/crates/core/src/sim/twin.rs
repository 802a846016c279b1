use rand_distr::{Distribution, Normal};

use crate::config::TwinConfig;
use crate::error::{invalid, Error, Result};
use crate::inference::{InferenceModel, Prediction, SmoothedStep};
use crate::model::{ControlInput, HealthBelief, MarginalSummary, Observation};
use crate::planner::Policy;
use crate::rng;

const ENSEMBLE_STREAM: u64 = 0x5457_494E_0000_0006;

/// Operational ensemble over `e`: `n` draws from the calibrated Gaussian.
pub fn draw_e_ensemble(mean: f64, std: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(invalid("e ensemble std must be nonnegative"));
    }
    let dist = Normal::new(mean, std).map_err(|_| invalid("e ensemble mean must be finite"))?;
    let mut rng = rng::stream(seed, ENSEMBLE_STREAM);
    let e: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    if e.iter().any(|x| !(*x > 0.0)) {
        return Err(invalid("e ensemble produced a nonpositive modulus scale"));
    }
    Ok(e)
}

/// Everything the twin endpoint remembers between steps.
#[derive(Debug, Clone)]
pub struct TwinState {
    pub model: InferenceModel,
    pub policy: Policy,
    pub horizon: usize,
    /// Belief over the health at the first operational step, before its observation.
    pub prior: HealthBelief,
    pub t0: u64,
    pub initial_load: ControlInput,
    controls: Vec<ControlInput>,
    observations: Vec<Observation>,
    log_l: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinStepOutput {
    /// Control for the next step.
    pub control: ControlInput,
    /// Digital state at the current step given all data so far.
    pub current: SmoothedStep,
    /// Smoothed marginal summaries over the whole history, oldest first.
    pub smoothed: Vec<MarginalSummary>,
    pub prediction: Prediction,
}

impl TwinState {
    /// The first control is the policy's choice under the prior; it is in
    /// effect while the first observation is recorded.
    pub fn new(model: InferenceModel, policy: Policy, prior: HealthBelief, t0: u64, horizon: usize) -> Result<Self> {
        policy.validate()?;
        let initial_load = policy.act(&prior);
        Ok(TwinState {
            model,
            policy,
            horizon,
            prior,
            t0,
            initial_load,
            controls: Vec::new(),
            observations: Vec::new(),
            log_l: Vec::new(),
        })
    }

    pub fn from_config(cfg: &TwinConfig, policy: Policy, t0: u64, seed: u64) -> Result<Self> {
        let e = draw_e_ensemble(cfg.twin.e_mean, cfg.twin.e_std, cfg.twin.n_e_samples, seed)?;
        let prior = HealthBelief::delta(cfg.twin.initial_health, e)?;
        Self::new(InferenceModel::from_config(cfg)?, policy, prior, t0, cfg.twin.horizon)
    }

    /// Step the next observation must carry.
    pub fn next_t(&self) -> u64 {
        self.t0 + self.observations.len() as u64
    }

    /// Load in effect during the next observation.
    pub fn current_load(&self) -> ControlInput {
        self.controls.last().copied().unwrap_or(self.initial_load)
    }

    pub fn controls(&self) -> &[ControlInput] {
        &self.controls
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Assimilates `obs`, re-smooths the history, decides the next control
    /// from the filtered belief and forecasts `horizon` steps under the policy.
    pub fn step(&mut self, obs: Observation) -> Result<TwinStepOutput> {
        if obs.t != self.next_t() {
            return Err(invalid(format!("twin expected observation for t = {}, got t = {}", self.next_t(), obs.t)));
        }
        let load = self.current_load();
        let e = &self.prior.e_samples;
        let log_l = self.model.log_likelihood(&obs, load, e)?;
        self.log_l.push(log_l);
        let (mut filtered, smoothed) = match self.model.forward_backward(&self.prior.probs, &self.controls, &self.log_l) {
            Ok(r) => r,
            Err(err) => {
                self.log_l.pop();
                return Err(err);
            }
        };
        let filtered_now = filtered.pop().expect("history is nonempty");
        let belief = HealthBelief::new(filtered_now.clone(), e.clone())?;
        let control = self.policy.act(&belief);
        let prediction = self.model.predict(&belief, obs.t, |z| self.policy.action(z), self.horizon)?;
        let current = self.model.step_summary(obs.t, load, filtered_now, belief, Some(&obs))?;
        self.observations.push(obs);
        self.controls.push(control);
        Ok(TwinStepOutput {
            control,
            current,
            smoothed: smoothed.iter().map(|p| MarginalSummary::of(p)).collect(),
            prediction,
        })
    }
}

/// Functional form of [`TwinState::step`].
pub fn twin_step(state: &mut TwinState, obs: Observation) -> Result<TwinStepOutput> {
    state.step(obs).map_err(|e| match e {
        Error::AnnihilatedSupport => Error::InconsistentObservation,
        other => other,
    })
}

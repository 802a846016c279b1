use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ControlInput, HealthState, Moments, Observation, QoIDistribution, RewardRecord, RewardSummary,
    HEALTH_LEVELS, NUM_HEALTH_STATES,
};
use crate::surrogate::SurrogateConfig;

/// Per-region probability of worsening by one grid step during a manoeuvre.
pub fn worsen_probability(u: ControlInput) -> f64 {
    match u {
        ControlInput::TwoG => 0.05,
        ControlInput::ThreeG => 0.10,
    }
}

/// Row-stochastic health transition matrix for one control; `rows[from][to]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub control: ControlInput,
    pub rows: Vec<[f64; NUM_HEALTH_STATES]>,
}

impl TransitionTable {
    pub fn prob(&self, from: HealthState, to: HealthState) -> f64 {
        self.rows[from.index()][to.index()]
    }

    /// Pushes a distribution one step forward: `p'(z') = Σ_z p(z) T(z, z')`.
    pub fn propagate(&self, probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; NUM_HEALTH_STATES];
        for (row, &p) in self.rows.iter().zip(probs) {
            if p == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(row) {
                *o += p * t;
            }
        }
        out
    }
}

pub fn build_transition(u: ControlInput) -> TransitionTable {
    transition_with_probability(u, worsen_probability(u))
}

/// Each region independently advances one level with probability `p`; the
/// top level is absorbing.
pub fn transition_with_probability(control: ControlInput, p: f64) -> TransitionTable {
    let top = HEALTH_LEVELS.len() - 1;
    let region = |from: usize, to: usize| -> f64 {
        if from == top {
            (to == top) as u8 as f64
        } else if to == from {
            1.0 - p
        } else if to == from + 1 {
            p
        } else {
            0.0
        }
    };
    let rows = (0..NUM_HEALTH_STATES)
        .map(|i| {
            let (a1, a2) = (i / HEALTH_LEVELS.len(), i % HEALTH_LEVELS.len());
            std::array::from_fn(|k| {
                let (b1, b2) = (k / HEALTH_LEVELS.len(), k % HEALTH_LEVELS.len());
                region(a1, b1) * region(a2, b2)
            })
        })
        .collect();
    TransitionTable { control, rows }
}

fn gaussian_log_density(x: f64, mean: f64, sigma: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let r = (x - mean) / sigma;
    -0.5 * r * r - sigma.ln() - HALF_LN_2PI
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `Σ_j ln( (1/N) Σ_k N(observed_j; predicted[k][j], σ) )`: the sensor noise is
/// independent across gauges and the modulus uncertainty is averaged out per
/// gauge.
pub fn ensemble_log_likelihood(observed: &[f64], predicted: &[Vec<f64>], sigma: f64) -> f64 {
    let ln_n = (predicted.len() as f64).ln();
    (0..observed.len())
        .map(|j| {
            log_sum_exp(predicted.iter().map(|p| gaussian_log_density(observed[j], p[j], sigma))) - ln_n
        })
        .sum()
}

/// Exponentiates after subtracting the maximum and normalizes.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InconsistentObservation);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Unnormalized log-likelihood of `obs` for every grid state under load `u`.
pub fn assimilation_log_likelihood(
    cfg: &SurrogateConfig,
    obs: &Observation,
    u: ControlInput,
    e_samples: &[f64],
    sigma_sensor: f64,
) -> Result<Vec<f64>> {
    obs.validate()?;
    if e_samples.is_empty() {
        return Err(crate::error::invalid("assimilation needs at least one e sample"));
    }
    let log_l: Vec<f64> = (0..NUM_HEALTH_STATES)
        .map(|i| {
            let z = HealthState::from_index(i);
            let predicted: Vec<Vec<f64>> =
                e_samples.iter().map(|&e| cfg.strains(z, e, u).to_vec()).collect();
            ensemble_log_likelihood(&obs.strains_microstrain, &predicted, sigma_sensor)
        })
        .collect();
    if log_l.iter().any(|l| l.is_nan()) {
        return Err(Error::InconsistentObservation);
    }
    Ok(log_l)
}

/// Assimilation factor normalized over the grid.
pub fn assimilation_likelihood(
    cfg: &SurrogateConfig,
    obs: &Observation,
    u: ControlInput,
    e_samples: &[f64],
    sigma_sensor: f64,
) -> Result<Vec<f64>> {
    normalize_log_weights(&assimilation_log_likelihood(cfg, obs, u, e_samples, sigma_sensor)?)
}

/// QoI over a joint (load, health) distribution: one sample per
/// `(load, z, e_k)` with weight `P(load, z) / N`. Entries are visited in the
/// order given, then ascending state index, then ascending sample index.
/// Zero-probability states are skipped.
pub fn qoi_distribution(
    cfg: &SurrogateConfig,
    components: &[(ControlInput, &[f64])],
    e_samples: &[f64],
) -> QoIDistribution {
    let n = e_samples.len() as f64;
    let mut qoi = QoIDistribution { weights: Vec::new(), loads: Vec::new(), strains_microstrain: Vec::new() };
    for &(u, probs) in components {
        for (i, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let z = HealthState::from_index(i);
            for &e in e_samples {
                qoi.weights.push(p / n);
                qoi.loads.push(u);
                qoi.strains_microstrain.push(cfg.strains(z, e, u).to_vec());
            }
        }
    }
    qoi
}

/// `+0.1` for the faster 3g turn, `-0.1` for 2g.
pub fn r_control(u: ControlInput) -> f64 {
    match u {
        ControlInput::TwoG => -0.1,
        ControlInput::ThreeG => 0.1,
    }
}

/// Mean absolute sensor residual in units of the sensor noise, negated.
pub fn r_error(observed: &[f64], predicted: &[f64], sigma_sensor: f64) -> f64 {
    let n = observed.len() as f64;
    -observed.iter().zip(predicted).map(|(o, p)| (o - p).abs() / sigma_sensor).sum::<f64>() / n
}

/// Rewards of a single QoI sample.
pub fn reward_record(
    cfg: &SurrogateConfig,
    obs: Option<&Observation>,
    strains: &[f64],
    u: ControlInput,
    sigma_sensor: f64,
) -> RewardRecord {
    let max = strains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    RewardRecord {
        r_error: obs.map(|o| r_error(&o.strains_microstrain, strains, sigma_sensor)),
        r_health: cfg.r_health(max),
        r_control: r_control(u),
    }
}

/// Weighted mean and std of every reward term over the QoI support.
/// `r_error` is present only when an observation is supplied.
pub fn evaluate_rewards(
    cfg: &SurrogateConfig,
    obs: Option<&Observation>,
    qoi: &QoIDistribution,
    sigma_sensor: f64,
) -> RewardSummary {
    let records: Vec<(RewardRecord, f64)> = (0..qoi.len())
        .map(|k| {
            let rec = reward_record(cfg, obs, &qoi.strains_microstrain[k], qoi.loads[k], sigma_sensor);
            (rec, qoi.weights[k])
        })
        .collect();
    let moments = |f: fn(&RewardRecord) -> f64| Moments::weighted(records.iter().map(|(r, w)| (f(r), *w)));
    RewardSummary {
        r_error: obs.map(|_| moments(|r| r.r_error.unwrap_or(f64::NAN))),
        r_health: moments(|r| r.r_health),
        r_control: moments(|r| r.r_control),
    }
}

//! Offline planning on the fully observable health MDP.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::TwinConfig;
use crate::error::{invalid, Error, Result};
use crate::inference::{build_transition, r_control, TransitionTable};
use crate::model::{ControlInput, HealthBelief, HealthState, HEALTH_LEVELS, NUM_HEALTH_STATES};
use crate::surrogate::SurrogateConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    /// `rewards[z][u]`, indexed by grid index and [`ControlInput::index`].
    pub rewards: Vec<[f64; 2]>,
    pub transitions: [TransitionTable; 2],
    pub gamma: f64,
}

impl MdpSpec {
    /// `r_health(max strain at (z, e_map, u)) + control_weight · r_control(u)`.
    pub fn from_surrogate(cfg: &SurrogateConfig, e_map: f64, control_weight: f64, gamma: f64) -> Result<Self> {
        let rewards = (0..NUM_HEALTH_STATES)
            .map(|i| {
                let z = HealthState::from_index(i);
                ControlInput::ALL.map(|u| cfg.r_health(cfg.max_strain(z, e_map, u)) + control_weight * r_control(u))
            })
            .collect();
        Self::with_rewards(rewards, gamma)
    }

    pub fn from_config(cfg: &TwinConfig) -> Result<Self> {
        let p = &cfg.planner;
        Self::from_surrogate(&cfg.surrogate, p.e_map, p.control_weight, p.gamma)
    }

    /// Arbitrary rewards over the standard health dynamics.
    pub fn with_rewards(rewards: Vec<[f64; 2]>, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if rewards.len() != NUM_HEALTH_STATES || rewards.iter().flatten().any(|r| !r.is_finite()) {
            return Err(invalid("need a finite reward for every state and action"));
        }
        Ok(MdpSpec { rewards, transitions: ControlInput::ALL.map(build_transition), gamma })
    }

    fn q_values(&self, values: &[f64], z: usize) -> [f64; 2] {
        std::array::from_fn(|a| {
            let row = &self.transitions[a].rows[z];
            let future: f64 = row.iter().zip(values).map(|(p, v)| p * v).sum();
            self.rewards[z][a] + self.gamma * future
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub z1: u8,
    pub z2: u8,
    pub action: ControlInput,
    pub value: f64,
}

/// Stationary health-to-manoeuvre map with its expected discounted return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub entries: Vec<PolicyEntry>,
}

impl Policy {
    pub fn action(&self, z: HealthState) -> ControlInput {
        self.entries[z.index()].action
    }

    pub fn value(&self, z: HealthState) -> f64 {
        self.entries[z.index()].value
    }

    /// Control for the most probable health state (ties to the lowest index).
    pub fn act(&self, belief: &HealthBelief) -> ControlInput {
        self.action(belief.map_state())
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != NUM_HEALTH_STATES {
            return Err(invalid(format!("policy needs {NUM_HEALTH_STATES} entries")));
        }
        for (i, e) in self.entries.iter().enumerate() {
            let z = HealthState::from_index(i);
            if (e.z1, e.z2) != (z.z1, z.z2) {
                return Err(invalid(format!("policy entry {i} is for ({}, {}), expected ({}, {})", e.z1, e.z2, z.z1, z.z2)));
            }
        }
        Ok(())
    }

    /// Action table with rows `z1` and columns `z2`.
    pub fn grid(&self) -> String {
        let mut out = String::from("z1\\z2");
        for z2 in HEALTH_LEVELS {
            write!(out, "{z2:>5}").unwrap();
        }
        out.push('\n');
        for z1 in HEALTH_LEVELS {
            write!(out, "{z1:>5}").unwrap();
            for z2 in HEALTH_LEVELS {
                write!(out, "{:>5}", self.action(HealthState { z1, z2 }).label()).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub policy: Policy,
    pub iterations: usize,
    /// `max |V_{n+1} - V_n|` after every sweep.
    pub residuals: Vec<f64>,
}

/// Bellman sweeps from `V = 0` until the sup-norm change drops below `tol`.
/// The greedy policy prefers 2g unless 3g is better by more than rounding
/// error (relative `1e-12`).
pub fn value_iteration(spec: &MdpSpec, tol: f64, max_iter: usize) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let mut values = vec![0.0; NUM_HEALTH_STATES];
    let mut residuals = Vec::new();
    loop {
        if residuals.len() == max_iter {
            return Err(Error::ValueIterationNotConverged {
                iterations: max_iter,
                residual: residuals.last().copied().unwrap_or(f64::INFINITY),
            });
        }
        let next: Vec<f64> = (0..NUM_HEALTH_STATES)
            .map(|z| {
                let q = spec.q_values(&values, z);
                q[0].max(q[1])
            })
            .collect();
        let residual = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        residuals.push(residual);
        if residual < tol {
            break;
        }
    }
    let entries = (0..NUM_HEALTH_STATES)
        .map(|z| {
            let q = spec.q_values(&values, z);
            let margin = TIE_TOLERANCE * q[0].abs().max(1.0);
            let action = if q[1] > q[0] + margin { ControlInput::ThreeG } else { ControlInput::TwoG };
            let s = HealthState::from_index(z);
            PolicyEntry { z1: s.z1, z2: s.z2, action, value: values[z] }
        })
        .collect();
    Ok(ValueIteration { policy: Policy { entries }, iterations: residuals.len(), residuals })
}

/// Solves the configured MDP with the configured tolerance and budget.
pub fn solve(cfg: &TwinConfig) -> Result<ValueIteration> {
    value_iteration(&MdpSpec::from_config(cfg)?, cfg.planner.tolerance, cfg.planner.max_iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::health_grid;
    use proptest::prelude::*;

    fn default_policy() -> ValueIteration {
        solve(&TwinConfig::default()).unwrap()
    }

    #[test]
    fn default_config_gives_threshold_policy() {
        let vi = default_policy();
        for z in health_grid() {
            let want = if z.z1 >= 60 { ControlInput::TwoG } else { ControlInput::ThreeG };
            assert_eq!(vi.policy.action(z), want, "at {z:?}\n{}", vi.policy.grid());
        }
    }

    #[test]
    fn residuals_contract() {
        let vi = default_policy();
        for w in vi.residuals.windows(2) {
            assert!(w[1] <= 0.6 * w[0] + 1e-12);
        }
        assert!(*vi.residuals.last().unwrap() < 1e-10);
    }

    #[test]
    fn myopic_policy_is_immediate_argmax() {
        let cfg = TwinConfig::default();
        let spec = MdpSpec::from_surrogate(&cfg.surrogate, 1.0073, 2.5, 0.0).unwrap();
        let vi = value_iteration(&spec, 1e-10, 100).unwrap();
        for z in health_grid() {
            let r = spec.rewards[z.index()];
            let want = if r[1] > r[0] { ControlInput::ThreeG } else { ControlInput::TwoG };
            assert_eq!(vi.policy.action(z), want);
            assert_eq!(vi.policy.value(z), r[0].max(r[1]));
        }
    }

    #[test]
    fn flat_health_reward_prefers_3g_everywhere() {
        let rewards = vec![[0.7 + 2.5 * -0.1, 0.7 + 2.5 * 0.1]; 25];
        let vi = value_iteration(&MdpSpec::with_rewards(rewards, 0.6).unwrap(), 1e-10, 10_000).unwrap();
        assert!(vi.policy.entries.iter().all(|e| e.action == ControlInput::ThreeG));
    }

    #[test]
    fn exact_ties_go_to_2g() {
        let vi = value_iteration(&MdpSpec::with_rewards(vec![[1.0, 1.0]; 25], 0.6).unwrap(), 1e-10, 10_000).unwrap();
        assert!(vi.policy.entries.iter().all(|e| e.action == ControlInput::TwoG));
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        let spec = MdpSpec::from_config(&TwinConfig::default()).unwrap();
        match value_iteration(&spec, 1e-10, 3) {
            Err(Error::ValueIterationNotConverged { iterations: 3, residual }) => assert!(residual > 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gamma_domain_enforced() {
        assert!(MdpSpec::with_rewards(vec![[0.0; 2]; 25], 1.0).is_err());
        assert!(MdpSpec::with_rewards(vec![[0.0; 2]; 25], -0.1).is_err());
    }

    #[test]
    fn act_uses_map_state() {
        let p = default_policy().policy;
        let e = vec![1.0];
        assert_eq!(p.act(&HealthBelief::delta(HealthState::new(80, 0).unwrap(), e.clone()).unwrap()), ControlInput::TwoG);
        assert_eq!(p.act(&HealthBelief::delta(HealthState::PRISTINE, e.clone()).unwrap()), ControlInput::ThreeG);
        let w: Vec<f64> = (0..25).map(|i| if i == 16 { 3.0 } else { 1.0 }).collect();
        let scaled: Vec<f64> = w.iter().map(|x| x * 1e-200).collect();
        let a = HealthBelief::new(w, e.clone()).unwrap();
        let b = HealthBelief::new(scaled, e).unwrap();
        assert_eq!(p.act(&a), p.act(&b));
    }

    #[test]
    fn policy_json_has_25_entries() {
        let p = default_policy().policy;
        let v = serde_json::to_value(&p).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 25);
        assert_eq!(arr[7]["z1"], 20);
        assert_eq!(arr[7]["z2"], 40);
        assert_eq!(arr[0]["action"], "3g");
        let back: Policy = serde_json::from_value(v).unwrap();
        back.validate().unwrap();
        assert_eq!(back, p);
        let grid = p.grid();
        assert_eq!(grid.lines().count(), 6);
        assert!(grid.lines().nth(4).unwrap().contains("2g"));
    }

    proptest! {
        #[test]
        fn reward_shift_adds_constant_to_values(c in -5.0f64..5.0, gamma in 0.0f64..0.95) {
            let cfg = TwinConfig::default();
            let base = MdpSpec::from_surrogate(&cfg.surrogate, 1.0073, 2.5, gamma).unwrap();
            let shifted = MdpSpec::with_rewards(base.rewards.iter().map(|r| [r[0] + c, r[1] + c]).collect(), gamma).unwrap();
            let a = value_iteration(&base, 1e-13, 100_000).unwrap();
            let b = value_iteration(&shifted, 1e-13, 100_000).unwrap();
            for (x, y) in a.policy.entries.iter().zip(&b.policy.entries) {
                prop_assert!((y.value - x.value - c / (1.0 - gamma)).abs() < 1e-9);
                prop_assert_eq!(x.action, y.action);
            }
        }

        #[test]
        fn values_nonincreasing_in_damage(gamma in 0.0f64..0.95) {
            let cfg = TwinConfig::default();
            let spec = MdpSpec::from_surrogate(&cfg.surrogate, 1.0073, 2.5, gamma).unwrap();
            let vi = value_iteration(&spec, 1e-12, 100_000).unwrap();
            for a in health_grid() {
                for b in health_grid() {
                    if a.le_componentwise(&b) {
                        prop_assert!(vi.policy.value(b) <= vi.policy.value(a) + 1e-12);
                    }
                }
            }
        }
    }
}

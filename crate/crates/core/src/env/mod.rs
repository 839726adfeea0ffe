//! Finite-horizon environments and trajectory sampling.

mod catalog;
mod electricity;
mod finite;

use serde::{Deserialize, Serialize};

pub use catalog::{
    exp_counterexample, markov_test_env, scaling_grid_env, scaling_grid_env_with_horizon,
    traffic_grid_env, two_state_counterexample, utility_grid_env, GridMove,
};
pub use electricity::{ElecParams, ElectricityEnv, PriceSeries, SLOTS};
pub use finite::{Branch, FiniteMdp, FiniteMdpBuilder};

use crate::error::Result;
use crate::policy::{HistoryView, RolloutPolicy};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvState {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl EnvState {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            EnvState::Discrete(s) => Some(*s),
            EnvState::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    /// `n` labelled elements.
    Discrete(usize),
    /// Real vectors of the given dimension.
    Continuous(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: EnvState,
    pub action: Action,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub return_value: f64,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, discount: f64) -> Self {
        let return_value = discounted_sum(steps.iter().map(|s| s.reward), discount);
        Trajectory {
            steps,
            return_value,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `Σ γ^t r_t`, accumulated front to back.
pub fn discounted_sum(rewards: impl IntoIterator<Item = f64>, discount: f64) -> f64 {
    let mut total = 0.0;
    let mut factor = 1.0;
    for r in rewards {
        total += factor * r;
        factor *= discount;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// An episodic environment with a fixed horizon.
pub trait Environment: Sync {
    fn horizon(&self) -> usize;

    fn discount(&self) -> f64 {
        1.0
    }

    fn observation_space(&self) -> Space;

    fn action_space(&self) -> Space;

    /// Bound on the absolute value of any single reward.
    fn r_max(&self) -> f64;

    fn reset(&self, rng: &mut SimRng) -> EnvState;

    fn step(&self, t: usize, state: &EnvState, action: &Action, rng: &mut SimRng) -> Result<Transition>;

    fn is_terminal(&self, _state: &EnvState) -> bool {
        false
    }

    /// The tabular description, for environments that have one.
    fn as_finite(&self) -> Option<&FiniteMdp> {
        None
    }
}

/// Rolls out one episode: `s₀ ~ ρ`, then actions from the policy until a
/// terminal state or the horizon.
pub fn sample_trajectory<E, P>(env: &E, policy: &P, rng: &mut SimRng) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: RolloutPolicy + ?Sized,
{
    policy.check_compatible(env.observation_space(), env.action_space())?;
    let horizon = env.horizon();
    let discount = env.discount();
    let mut steps: Vec<Step> = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(Trajectory::new(steps, discount));
    }
    let mut state = env.reset(rng);
    let mut partial = 0.0;
    let mut factor = 1.0;
    for t in 0..horizon {
        if env.is_terminal(&state) {
            break;
        }
        let action = {
            let view = HistoryView {
                t,
                state: &state,
                partial_return: partial,
                past: &steps,
            };
            policy.act(&view, rng)?
        };
        let tr = env.step(t, &state, &action, rng)?;
        partial += factor * tr.reward;
        factor *= discount;
        steps.push(Step {
            state,
            action,
            reward: tr.reward,
        });
        state = tr.next;
        if tr.done {
            break;
        }
    }
    Ok(Trajectory::new(steps, discount))
}

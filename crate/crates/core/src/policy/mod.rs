//! Parameterized policies over histories.
//!
//! A policy sees a [`HistoryView`] and, through its [`HistoryAbstraction`],
//! conditions on the current state only, on `(state, t)`, on
//! `(state, t, binned partial return)` or on the whole history. Tabular
//! softmax policies and a Gaussian MLP policy expose exact score-function
//! and entropy gradients.

mod history;
mod mlp;
mod params;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use history::{bin_partial_return, HistoryAbstraction, HistoryIndex, FULL_HISTORY_CAP};
pub use mlp::{GaussianMlp, DEFAULT_HIDDEN, INITIAL_LOG_STD};
pub use params::{randomize, LogitTable, ModeAction, PolicyKind, PolicyParams};

use crate::env::{Action, EnvState, Space, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// What a policy may look at when choosing the action at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    pub t: usize,
    pub state: &'a EnvState,
    /// Discounted sum of the rewards received before `t`.
    pub partial_return: f64,
    pub past: &'a [Step],
}

/// Policy input after applying the history abstraction.
#[derive(Debug, Clone, PartialEq)]
pub enum Feature {
    Row(usize),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Discrete(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl ActionDist {
    pub fn sample(&self, rng: &mut SimRng) -> Result<Action> {
        match self {
            ActionDist::Discrete(p) => Ok(Action::Discrete(sample_index(p, rng))),
            ActionDist::Gaussian { mean, std } => Ok(Action::Continuous(
                mean.iter()
                    .zip(std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + s * z
                    })
                    .collect(),
            )),
        }
    }
}

impl ActionDist {
    /// Most likely action: the first most probable index, or the mean.
    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Discrete(p) => {
                let best = p
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &q)| if q > p[best] { i } else { best });
                Action::Discrete(best)
            }
            ActionDist::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }
}

/// Inverse-CDF draw; falls back to the last positive entry on round-off.
pub(crate) fn sample_index(p: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Anything that can choose actions during a rollout.
pub trait RolloutPolicy: Sync {
    fn act(&self, view: &HistoryView<'_>, rng: &mut SimRng) -> Result<Action>;

    fn check_compatible(&self, observation: Space, action: Space) -> Result<()>;
}

/// A policy over finitely many actions whose probabilities can be queried.
pub trait DiscretePolicy: Sync {
    fn action_probs(&self, view: &HistoryView<'_>) -> Result<Vec<f64>>;

    /// True when the probabilities depend on the history only through the
    /// current state, the time step and the partial return.
    fn is_sum_markov(&self) -> bool {
        true
    }
}

/// Tabular policy given directly by action probabilities, one row per
/// abstraction cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    pub abstraction: HistoryAbstraction,
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<f64>,
}

impl ProbabilityTable {
    pub fn uniform(abstraction: HistoryAbstraction, n_states: usize, n_actions: usize) -> Result<Self> {
        abstraction.validate()?;
        if n_actions == 0 {
            return Err(Error::config("policy needs at least one action"));
        }
        let rows = abstraction.rows(n_states);
        Ok(ProbabilityTable {
            abstraction,
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; rows * n_actions],
        })
    }

    pub fn rows(&self) -> usize {
        self.abstraction.rows(self.n_states)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.probs[r * self.n_actions..(r + 1) * self.n_actions]
    }

    pub fn set_row(&mut self, r: usize, p: &[f64]) -> Result<()> {
        if p.len() != self.n_actions || p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::argument(format!("row {r}: {p:?} is not a probability vector")));
        }
        self.probs[r * self.n_actions..(r + 1) * self.n_actions].copy_from_slice(p);
        Ok(())
    }

    /// Sets every row of every time step to the same distribution in state `s`.
    pub fn set_state(&mut self, s: usize, p: &[f64]) -> Result<()> {
        let n = self.n_states;
        for r in (0..self.rows()).filter(|r| r % n == s) {
            self.set_row(r, p)?;
        }
        Ok(())
    }
}

impl DiscretePolicy for ProbabilityTable {
    fn action_probs(&self, view: &HistoryView<'_>) -> Result<Vec<f64>> {
        Ok(self.row(self.abstraction.row(self.n_states, view)?).to_vec())
    }

    fn is_sum_markov(&self) -> bool {
        self.abstraction.is_sum_markov()
    }
}

impl RolloutPolicy for ProbabilityTable {
    fn act(&self, view: &HistoryView<'_>, rng: &mut SimRng) -> Result<Action> {
        let p = self.action_probs(view)?;
        Ok(Action::Discrete(sample_index(&p, rng)))
    }

    fn check_compatible(&self, observation: Space, action: Space) -> Result<()> {
        if observation == Space::Discrete(self.n_states) && action == Space::Discrete(self.n_actions) {
            Ok(())
        } else {
            Err(Error::config(format!(
                "probability table over {} states and {} actions cannot drive {observation:?} / {action:?}",
                self.n_states, self.n_actions
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_trajectory, two_state_counterexample, Environment};
    use crate::rng::seeded;

    fn row_view(state: &EnvState) -> HistoryView<'_> {
        HistoryView {
            t: 0,
            state,
            partial_return: 0.0,
            past: &[],
        }
    }

    fn tab(logits: Vec<f64>) -> PolicyParams {
        let n = logits.len();
        let mut p = PolicyParams::softmax(HistoryAbstraction::Stationary, 1, n).unwrap();
        p.params_mut().copy_from_slice(&logits);
        p
    }

    fn probs(p: &PolicyParams) -> Vec<f64> {
        match p.action_distribution(&Feature::Row(0)).unwrap() {
            ActionDist::Discrete(v) => v,
            _ => unreachable!(),
        }
    }

    #[test]
    fn equal_logits_are_uniform() {
        let p = probs(&tab(vec![0.7; 4]));
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_identity() {
        let p = probs(&tab(vec![0.0, 3f64.ln()]));
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn hot_tanh_matches_softmax() {
        let logits = vec![0.3, -1.2, 2.0];
        let plain = probs(&tab(logits.clone()));
        let mut hot = PolicyParams::softmax_tanh(HistoryAbstraction::Stationary, 1, 3, 1e6).unwrap();
        hot.params_mut().copy_from_slice(&logits);
        for (a, b) in plain.iter().zip(probs(&hot)) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn two_action_score() {
        let p = tab(vec![0.4, -0.3]);
        let g = p.score_gradient(&Feature::Row(0), &Action::Discrete(1)).unwrap();
        let pi = probs(&p);
        assert!((g[1] - (1.0 - pi[1])).abs() < 1e-15);
        assert!((g[0] + pi[0]).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_action_is_an_error() {
        let p = tab(vec![0.0, -1e6]);
        assert!(p.score_gradient(&Feature::Row(0), &Action::Discrete(1)).is_err());
    }

    #[test]
    fn entropy_extremes() {
        let (h, _) = tab(vec![0.0; 4]).entropy_and_gradient(&Feature::Row(0)).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-15);
        let (h, _) = tab(vec![20.0, -20.0]).entropy_and_gradient(&Feature::Row(0)).unwrap();
        assert!(h <= 1e-6);
        let mut rng = seeded(1);
        let g = PolicyParams::gaussian_mlp(HistoryAbstraction::Stationary, 2, 1, &[4], None, &mut rng).unwrap();
        assert!(matches!(
            g.entropy_and_gradient(&Feature::Vector(vec![0.0, 0.0])),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn gaussian_fixed_std_score() {
        let mut rng = seeded(2);
        let p = PolicyParams::gaussian_mlp(HistoryAbstraction::Stationary, 2, 1, &[3], None, &mut rng).unwrap();
        let f = Feature::Vector(vec![0.5, -0.2]);
        let ActionDist::Gaussian { mean, std } = p.action_distribution(&f).unwrap() else { unreachable!() };
        assert!((std[0] - 0.5).abs() < 1e-15);
        let a = mean[0] + 0.3;
        let g = p.score_gradient(&f, &Action::Continuous(vec![a])).unwrap();
        // the last hidden-to-output bias enters the mean with slope 1
        let bias_index = p.n_params() - 2;
        assert!((g[bias_index] - 0.3 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut p = PolicyParams::softmax_tanh(HistoryAbstraction::Markov { horizon: 2 }, 3, 2, 1.5).unwrap();
        randomize(&mut p, 2.0, &mut seeded(4));
        let back = PolicyParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let mut broken: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        broken["kind"]["table"]["logits"] = serde_json::json!([1.0]);
        assert!(PolicyParams::from_json(&broken.to_string()).is_err());
    }

    #[test]
    fn incompatible_policy_is_a_configuration_error() {
        let env = two_state_counterexample();
        let p = PolicyParams::softmax(HistoryAbstraction::Stationary, 3, 2).unwrap();
        let r = sample_trajectory(&env, &p, &mut seeded(0));
        assert!(matches!(r, Err(Error::Configuration(_))));
        let ok = PolicyParams::softmax(HistoryAbstraction::Stationary, 2, 2).unwrap();
        assert!(sample_trajectory(&env, &ok, &mut seeded(0)).is_ok());
        assert_eq!(env.horizon(), 1);
    }

    #[test]
    fn probability_table_rows() {
        let mut t = ProbabilityTable::uniform(HistoryAbstraction::Markov { horizon: 2 }, 2, 2).unwrap();
        t.set_state(0, &[1.0, 0.0]).unwrap();
        let s = EnvState::Discrete(0);
        assert_eq!(t.action_probs(&row_view(&s)).unwrap(), vec![1.0, 0.0]);
        assert!(t.set_row(0, &[0.6, 0.6]).is_err());
    }
}

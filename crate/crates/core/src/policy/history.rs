use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::HistoryView;
use crate::cpt::MERGE_TOL;
use crate::env::{Action, EnvState, FiniteMdp};
use crate::error::{Error, Result};

/// Largest number of distinct histories a full-history table may index.
pub const FULL_HISTORY_CAP: usize = 10_000;

/// What part of the history a tabular policy may condition on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryAbstraction {
    /// Current state only.
    Stationary,
    /// Current state and time step.
    Markov { horizon: usize },
    /// Current state, time step and the bin of the return accumulated so far.
    /// Bin `i` is `[edges[i-1], edges[i])`; the outer bins are unbounded.
    SumAugmented { horizon: usize, edges: Vec<f64> },
    /// Every distinct history gets its own row.
    FullHistory { index: HistoryIndex },
}

impl HistoryAbstraction {
    pub fn sum_augmented(horizon: usize, edges: Vec<f64>) -> Result<Self> {
        let a = HistoryAbstraction::SumAugmented { horizon, edges };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if let HistoryAbstraction::SumAugmented { edges, .. } = self {
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation("partial-return bin edges must be finite and strictly increasing"));
            }
        }
        Ok(())
    }

    /// Number of table rows for an environment with `n_states` states.
    pub fn rows(&self, n_states: usize) -> usize {
        match self {
            HistoryAbstraction::Stationary => n_states,
            HistoryAbstraction::Markov { horizon } => horizon * n_states,
            HistoryAbstraction::SumAugmented { horizon, edges } => horizon * (edges.len() + 1) * n_states,
            HistoryAbstraction::FullHistory { index } => index.len(),
        }
    }

    /// Whether the row depends on the history only through `(s, t, partial return)`.
    pub fn is_sum_markov(&self) -> bool {
        !matches!(self, HistoryAbstraction::FullHistory { .. })
    }

    /// Row of a tabular policy for the given history.
    pub fn row(&self, n_states: usize, view: &HistoryView<'_>) -> Result<usize> {
        let s = match view.state {
            EnvState::Discrete(s) if *s < n_states => *s,
            other => {
                return Err(Error::config(format!(
                    "tabular policy over {n_states} states cannot read state {other:?}"
                )))
            }
        };
        let check_t = |horizon: usize| {
            if view.t >= horizon {
                Err(Error::config(format!("time step {} beyond policy horizon {horizon}", view.t)))
            } else {
                Ok(())
            }
        };
        match self {
            HistoryAbstraction::Stationary => Ok(s),
            HistoryAbstraction::Markov { horizon } => {
                check_t(*horizon)?;
                Ok(view.t * n_states + s)
            }
            HistoryAbstraction::SumAugmented { horizon, edges } => {
                check_t(*horizon)?;
                let bin = bin_index(edges, view.partial_return);
                Ok((view.t * (edges.len() + 1) + bin) * n_states + s)
            }
            HistoryAbstraction::FullHistory { index } => index.lookup(view),
        }
    }
}

fn bin_index(edges: &[f64], partial: f64) -> usize {
    edges.partition_point(|&e| e <= partial)
}

/// Bin of a partial return under a sum-augmented abstraction; other
/// abstractions have a single bin.
pub fn bin_partial_return(abstraction: &HistoryAbstraction, partial_sum: f64) -> usize {
    match abstraction {
        HistoryAbstraction::SumAugmented { edges, .. } => bin_index(edges, partial_sum),
        _ => 0,
    }
}

fn quantize(r: f64) -> i64 {
    (r / MERGE_TOL).round() as i64
}

/// Row numbers for every history of a small finite MDP, keyed by the
/// sequence `s₀, a₀, r₀, …, s_t` with rewards rounded to the merge tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct HistoryIndex {
    keys: Vec<Vec<i64>>,
    rows: HashMap<Vec<i64>, usize>,
}

impl From<Vec<Vec<i64>>> for HistoryIndex {
    fn from(keys: Vec<Vec<i64>>) -> Self {
        let rows = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        HistoryIndex { keys, rows }
    }
}

impl From<HistoryIndex> for Vec<Vec<i64>> {
    fn from(h: HistoryIndex) -> Self {
        h.keys
    }
}

impl HistoryIndex {
    /// Enumerates every history reachable when all actions have positive
    /// probability, at decision times before the horizon.
    pub fn build(mdp: &FiniteMdp) -> Result<Self> {
        use crate::env::Environment;
        let mut keys: Vec<Vec<i64>> = Vec::new();
        let mut stack: Vec<(Vec<i64>, usize, usize)> = mdp
            .initial()
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, _)| (vec![s as i64], s, 0))
            .collect();
        let mut seen = std::collections::HashSet::new();
        while let Some((key, s, t)) = stack.pop() {
            if t >= mdp.horizon() || mdp.terminal(s) || !seen.insert(key.clone()) {
                continue;
            }
            keys.push(key.clone());
            if keys.len() > FULL_HISTORY_CAP {
                return Err(Error::Resource {
                    what: "full-history table rows".into(),
                    count: keys.len(),
                    cap: FULL_HISTORY_CAP,
                });
            }
            for a in (0..mdp.n_actions()).rev() {
                for b in mdp.branches(s, a).iter().rev() {
                    for &(r, _) in b.rewards.iter().rev() {
                        let mut next = key.clone();
                        next.extend([a as i64, quantize(r), b.next as i64]);
                        stack.push((next, b.next, t + 1));
                    }
                }
            }
        }
        Ok(HistoryIndex::from(keys))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn lookup(&self, view: &HistoryView<'_>) -> Result<usize> {
        let mut key = Vec::with_capacity(3 * view.past.len() + 1);
        let discrete = |s: &EnvState| s.discrete().ok_or_else(|| Error::config("full-history key needs discrete states"));
        for step in view.past {
            let a = match step.action {
                Action::Discrete(a) => a,
                Action::Continuous(_) => return Err(Error::config("full-history key needs discrete actions")),
            };
            key.extend([discrete(&step.state)? as i64, a as i64, quantize(step.reward)]);
        }
        key.push(discrete(view.state)? as i64);
        self.rows
            .get(&key)
            .copied()
            .ok_or_else(|| Error::config(format!("history {key:?} is not in the full-history index")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{exp_counterexample, two_state_counterexample};

    #[test]
    fn bins_are_half_open() {
        let a = HistoryAbstraction::sum_augmented(2, vec![0.5]).unwrap();
        assert_eq!(bin_partial_return(&a, 0.0), 0);
        assert_eq!(bin_partial_return(&a, 1.0), 1);
        assert_eq!(bin_partial_return(&a, 0.5), 1);
        assert!(HistoryAbstraction::sum_augmented(2, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn full_history_rows() {
        let idx = HistoryIndex::build(&two_state_counterexample()).unwrap();
        assert_eq!(idx.len(), 1);
        // s0, then (action, reward) pairs reaching s1
        let idx = HistoryIndex::build(&exp_counterexample()).unwrap();
        assert_eq!(idx.len(), 5);
        let json = serde_json::to_string(&idx).unwrap();
        assert_eq!(serde_json::from_str::<HistoryIndex>(&json).unwrap(), idx);
    }
}

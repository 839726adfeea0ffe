use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::cpt::{UtilitySpec, MERGE_TOL};
use crate::env::{EnvState, Environment, FiniteMdp};
use crate::error::{Error, Result};
use crate::policy::{DiscretePolicy, HistoryView};
use crate::rng::SimRng;

pub const STATE_CAP: usize = 1_000_000;

fn quantize(x: f64) -> i64 {
    (x / MERGE_TOL).round() as i64
}

/// A state of the unwound MDP: original state, time step and the
/// (discounted) return accumulated before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugState {
    pub state: usize,
    pub t: usize,
    pub partial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AugTransition {
    pub next: usize,
    pub prob: f64,
    /// Utility increment `U(σ′) − U(σ)`.
    pub reward: f64,
}

/// Reachable part of the MDP over `(s, t, σ)` whose rewards are utility
/// increments, so that the total reward of a trajectory is `U(R) − U(0)`.
///
/// States are numbered layer by layer in `t`, so every transition goes to a
/// larger index.
#[derive(Debug, Clone)]
pub struct UnwoundMdp {
    pub states: Vec<AugState>,
    pub initial: Vec<(usize, f64)>,
    n_actions: usize,
    transitions: Vec<Vec<AugTransition>>,
    terminal: Vec<bool>,
    index: HashMap<(usize, usize, i64), usize>,
    pub base_utility: f64,
}

/// Builds the unwound MDP, reachable under a policy that tries every action.
pub fn unwind_mdp(mdp: &FiniteMdp, utility: &UtilitySpec) -> Result<UnwoundMdp> {
    let horizon = mdp.horizon();
    let discount = mdp.discount();
    let na = mdp.n_actions();
    let mut u = UnwoundMdp {
        states: Vec::new(),
        initial: Vec::new(),
        n_actions: na,
        transitions: Vec::new(),
        terminal: Vec::new(),
        index: HashMap::new(),
        base_utility: utility.eval(0.0),
    };
    let intern = |u: &mut UnwoundMdp, s: usize, t: usize, sigma: f64| -> Result<usize> {
        let key = (s, t, quantize(sigma));
        if let Some(&i) = u.index.get(&key) {
            return Ok(i);
        }
        let i = u.states.len();
        if i >= STATE_CAP {
            return Err(Error::Resource {
                what: "unwound MDP states".into(),
                count: i + 1,
                cap: STATE_CAP,
            });
        }
        u.states.push(AugState { state: s, t, partial: sigma });
        u.terminal.push(t >= horizon || mdp.terminal(s));
        u.index.insert(key, i);
        Ok(i)
    };
    for (s, &p) in mdp.initial().iter().enumerate() {
        if p > 0.0 {
            let i = intern(&mut u, s, 0, 0.0)?;
            u.initial.push((i, p));
        }
    }
    let mut x = 0;
    while x < u.states.len() {
        let AugState { state: s, t, partial } = u.states[x];
        let mut rows = vec![Vec::new(); na];
        if !u.terminal[x] {
            let factor = discount.powi(t as i32);
            for (a, row) in rows.iter_mut().enumerate() {
                for b in mdp.branches(s, a) {
                    for &(r, pr) in &b.rewards {
                        let prob = b.prob * pr;
                        if prob <= 0.0 {
                            continue;
                        }
                        let next = intern(&mut u, b.next, t + 1, partial + factor * r)?;
                        let sigma2 = u.states[next].partial;
                        row.push(AugTransition {
                            next,
                            prob,
                            reward: utility.eval(sigma2) - utility.eval(partial),
                        });
                    }
                }
            }
        }
        u.transitions.extend(rows);
        x += 1;
    }
    Ok(u)
}

impl UnwoundMdp {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_terminal(&self, x: usize) -> bool {
        self.terminal[x]
    }

    pub fn transitions(&self, x: usize, a: usize) -> &[AugTransition] {
        &self.transitions[x * self.n_actions + a]
    }

    /// Index of the state `(s, t, σ)`, tolerating partial sums that differ
    /// from the stored one by rounding.
    pub fn lookup(&self, s: usize, t: usize, sigma: f64) -> Option<usize> {
        let q = quantize(sigma);
        [q, q - 1, q + 1].iter().find_map(|k| self.index.get(&(s, t, *k)).copied())
    }

    /// Samples one trajectory with actions from `choose`, returning the sum
    /// of utility increments and the final partial return.
    pub fn sample_rollout(&self, rng: &mut SimRng, mut choose: impl FnMut(usize, &mut SimRng) -> usize) -> (f64, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut x = self.initial.last().map_or(0, |p| p.0);
        for &(i, p) in &self.initial {
            acc += p;
            if u < acc {
                x = i;
                break;
            }
        }
        // Neumaier-compensated sum of the increments.
        let (mut total, mut carry) = (0.0f64, 0.0f64);
        while !self.terminal[x] {
            let a = choose(x, rng);
            let row = self.transitions(x, a);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = row[row.len() - 1];
            for tr in row {
                acc += tr.prob;
                if u < acc {
                    pick = *tr;
                    break;
                }
            }
            let next = total + pick.reward;
            carry += if total.abs() >= pick.reward.abs() {
                (total - next) + pick.reward
            } else {
                (pick.reward - next) + total
            };
            total = next;
            x = pick.next;
        }
        (total + carry, self.states[x].partial)
    }
}

/// Stochastic policy over unwound states, one action distribution per state.
#[derive(Debug, Clone)]
pub struct AugmentedPolicy<'a> {
    unwound: &'a UnwoundMdp,
    probs: Vec<f64>,
}

impl<'a> AugmentedPolicy<'a> {
    pub fn deterministic(unwound: &'a UnwoundMdp, actions: &[usize]) -> Self {
        let na = unwound.n_actions;
        let mut probs = vec![0.0; unwound.len() * na];
        for (x, &a) in actions.iter().enumerate() {
            probs[x * na + a] = 1.0;
        }
        AugmentedPolicy { unwound, probs }
    }

    /// Every row drawn uniformly from the probability simplex.
    pub fn random(unwound: &'a UnwoundMdp, rng: &mut SimRng) -> Self {
        let na = unwound.n_actions;
        let mut probs: Vec<f64> = (0..unwound.len() * na).map(|_| Exp1.sample(rng)).collect();
        for row in probs.chunks_mut(na) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
        }
        AugmentedPolicy { unwound, probs }
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let na = self.unwound.n_actions;
        &self.probs[x * na..(x + 1) * na]
    }
}

impl DiscretePolicy for AugmentedPolicy<'_> {
    fn action_probs(&self, view: &HistoryView<'_>) -> Result<Vec<f64>> {
        let s = match view.state {
            EnvState::Discrete(s) => *s,
            EnvState::Continuous(_) => return Err(Error::config("unwound policy needs discrete states")),
        };
        let x = self.unwound.lookup(s, view.t, view.partial_return).ok_or_else(|| {
            Error::config(format!(
                "history (s={s}, t={}, partial={}) is not a state of the unwound MDP",
                view.t, view.partial_return
            ))
        })?;
        Ok(self.row(x).to_vec())
    }
}

/// Exact `E[U(R)]` of a policy on the unwound MDP, by backward recursion.
pub fn evaluate_augmented_policy(unwound: &UnwoundMdp, policy: &AugmentedPolicy<'_>) -> f64 {
    let mut values = vec![0.0; unwound.len()];
    for x in (0..unwound.len()).rev() {
        if unwound.terminal[x] {
            continue;
        }
        values[x] = policy
            .row(x)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| p * q_value(unwound, &values, x, a))
            .sum();
    }
    unwound.base_utility + unwound.initial.iter().map(|&(x, p)| p * values[x]).sum::<f64>()
}

fn q_value(unwound: &UnwoundMdp, values: &[f64], x: usize, a: usize) -> f64 {
    unwound.transitions(x, a).iter().map(|tr| tr.prob * (tr.reward + values[tr.next])).sum()
}

/// Optimal expected utility and a deterministic optimal policy over `(s, t, σ)`.
#[derive(Debug, Clone)]
pub struct EutSolution {
    pub unwound: UnwoundMdp,
    /// Greedy action per unwound state (0 at terminal states).
    pub actions: Vec<usize>,
    pub values: Vec<f64>,
    /// `max_π E[U(R)]`.
    pub value: f64,
}

impl EutSolution {
    pub fn policy(&self) -> AugmentedPolicy<'_> {
        AugmentedPolicy::deterministic(&self.unwound, &self.actions)
    }

    /// Optimal action at `(s, t, σ)`, if that history is reachable.
    pub fn action_at(&self, s: usize, t: usize, sigma: f64) -> Option<usize> {
        self.unwound.lookup(s, t, sigma).map(|x| self.actions[x])
    }
}

/// Backward induction on the unwound MDP without discounting; ties go to
/// the smallest action index.
pub fn solve_eut_dp(mdp: &FiniteMdp, utility: &UtilitySpec) -> Result<EutSolution> {
    let unwound = unwind_mdp(mdp, utility)?;
    let n = unwound.len();
    let mut values = vec![0.0; n];
    let mut actions = vec![0; n];
    for x in (0..n).rev() {
        if unwound.terminal[x] {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..unwound.n_actions {
            let q = q_value(&unwound, &values, x, a);
            if q > best + 1e-12 {
                best = q;
                actions[x] = a;
            }
        }
        values[x] = best;
    }
    let value = unwound.base_utility + unwound.initial.iter().map(|&(x, p)| p * values[x]).sum::<f64>();
    Ok(EutSolution {
        unwound,
        actions,
        values,
        value,
    })
}

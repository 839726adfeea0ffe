use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, EnvState, Environment, Space, Transition};
use crate::error::{Error, Result};
use crate::rng::SimRng;

const SUM_TOL: f64 = 1e-12;

/// One possible outcome of taking an action: the next state, its
/// probability, and the finite reward law attached to `(s, a, s′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub next: usize,
    pub prob: f64,
    pub rewards: Vec<(f64, f64)>,
}

/// Tabular finite-horizon MDP with finitely supported stochastic rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub name: String,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    discount: f64,
    initial: Vec<f64>,
    /// Indexed by `s * n_actions + a`.
    branches: Vec<Vec<Branch>>,
    terminal: Vec<bool>,
    r_max: f64,
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn branches(&self, s: usize, a: usize) -> &[Branch] {
        &self.branches[s * self.n_actions + a]
    }

    pub fn terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// `P(s′ | s, a)`.
    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.branches(s, a)
            .iter()
            .filter(|b| b.next == next)
            .map(|b| b.prob)
            .sum()
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::validation("MDP needs at least one state and one action"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::validation(format!("discount must lie in (0, 1], got {}", self.discount)));
        }
        check_prob_vector(&self.initial, "initial distribution")?;
        if self.initial.len() != ns || self.terminal.len() != ns || self.branches.len() != ns * na {
            return Err(Error::validation("MDP tables have inconsistent dimensions"));
        }
        for s in 0..ns {
            for a in 0..na {
                let branches = self.branches(s, a);
                if branches.is_empty() {
                    return Err(Error::validation(format!("no transition defined for (s={s}, a={a})")));
                }
                let probs: Vec<f64> = branches.iter().map(|b| b.prob).collect();
                check_prob_vector(&probs, &format!("transition (s={s}, a={a})"))?;
                for b in branches {
                    if b.next >= ns {
                        return Err(Error::validation(format!("transition to unknown state {}", b.next)));
                    }
                    let rp: Vec<f64> = b.rewards.iter().map(|r| r.1).collect();
                    check_prob_vector(&rp, &format!("reward law (s={s}, a={a}, s'={})", b.next))?;
                    if let Some(&(r, _)) = b.rewards.iter().find(|r| r.0.abs() > self.r_max || !r.0.is_finite()) {
                        return Err(Error::validation(format!("reward {r} exceeds r_max {}", self.r_max)));
                    }
                }
                if self.terminal[s]
                    && !(branches.len() == 1
                        && branches[0].next == s
                        && branches[0].rewards.iter().all(|r| r.0 == 0.0))
                {
                    return Err(Error::validation(format!(
                        "terminal state {s} must self-loop with zero reward"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample_branch(&self, s: usize, a: usize, rng: &mut SimRng) -> (usize, f64) {
        let branches = self.branches(s, a);
        let branch = pick(branches.iter().map(|b| b.prob), rng).map_or(&branches[branches.len() - 1], |i| &branches[i]);
        let reward = pick(branch.rewards.iter().map(|r| r.1), rng)
            .map_or(branch.rewards[branch.rewards.len() - 1].0, |i| branch.rewards[i].0);
        (branch.next, reward)
    }
}

fn pick(probs: impl Iterator<Item = f64>, rng: &mut SimRng) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    None
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::validation(format!("{what} has a negative or non-finite probability")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::validation(format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

impl Environment for FiniteMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn observation_space(&self) -> Space {
        Space::Discrete(self.n_states)
    }

    fn action_space(&self) -> Space {
        Space::Discrete(self.n_actions)
    }

    fn r_max(&self) -> f64 {
        self.r_max
    }

    fn reset(&self, rng: &mut SimRng) -> EnvState {
        let s = pick(self.initial.iter().copied(), rng).unwrap_or(self.n_states - 1);
        EnvState::Discrete(s)
    }

    fn step(&self, _t: usize, state: &EnvState, action: &Action, rng: &mut SimRng) -> Result<Transition> {
        let (s, a) = match (state, action) {
            (EnvState::Discrete(s), Action::Discrete(a)) if *s < self.n_states && *a < self.n_actions => (*s, *a),
            _ => {
                return Err(Error::config(format!(
                    "{}: expected a discrete state below {} and action below {}",
                    self.name, self.n_states, self.n_actions
                )))
            }
        };
        let (next, reward) = self.sample_branch(s, a, rng);
        Ok(Transition {
            next: EnvState::Discrete(next),
            reward,
            done: self.terminal[next],
        })
    }

    fn is_terminal(&self, state: &EnvState) -> bool {
        matches!(state, EnvState::Discrete(s) if self.terminal.get(*s).copied().unwrap_or(false))
    }

    fn as_finite(&self) -> Option<&FiniteMdp> {
        Some(self)
    }
}

/// Incremental constructor; terminal states get their zero-reward self-loops
/// automatically.
#[derive(Debug, Clone)]
pub struct FiniteMdpBuilder {
    name: String,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    discount: f64,
    initial: Vec<f64>,
    branches: Vec<Vec<Branch>>,
    terminal: Vec<bool>,
    r_max: Option<f64>,
}

impl FiniteMdpBuilder {
    pub fn new(name: impl Into<String>, n_states: usize, n_actions: usize, horizon: usize) -> Self {
        FiniteMdpBuilder {
            name: name.into(),
            n_states,
            n_actions,
            horizon,
            discount: 1.0,
            initial: vec![0.0; n_states],
            branches: vec![Vec::new(); n_states * n_actions],
            terminal: vec![false; n_states],
            r_max: None,
        }
    }

    pub fn discount(mut self, gamma: f64) -> Self {
        self.discount = gamma;
        self
    }

    pub fn initial(mut self, dist: Vec<f64>) -> Self {
        self.initial = dist;
        self
    }

    pub fn start(mut self, s: usize) -> Self {
        self.initial = vec![0.0; self.n_states];
        self.initial[s] = 1.0;
        self
    }

    pub fn terminal(mut self, s: usize) -> Self {
        self.terminal[s] = true;
        self
    }

    pub fn r_max(mut self, r_max: f64) -> Self {
        self.r_max = Some(r_max);
        self
    }

    pub fn branch(mut self, s: usize, a: usize, next: usize, prob: f64, rewards: Vec<(f64, f64)>) -> Self {
        self.add_branch(s, a, next, prob, rewards);
        self
    }

    pub fn add_branch(&mut self, s: usize, a: usize, next: usize, prob: f64, rewards: Vec<(f64, f64)>) {
        self.branches[s * self.n_actions + a].push(Branch { next, prob, rewards });
    }

    /// Every action from `s` leads to the same outcome.
    pub fn all_actions(mut self, s: usize, next: usize, rewards: Vec<(f64, f64)>) -> Self {
        for a in 0..self.n_actions {
            self.add_branch(s, a, next, 1.0, rewards.clone());
        }
        self
    }

    pub fn build(mut self) -> Result<FiniteMdp> {
        for s in 0..self.n_states {
            if self.terminal[s] {
                for a in 0..self.n_actions {
                    self.branches[s * self.n_actions + a] = vec![Branch {
                        next: s,
                        prob: 1.0,
                        rewards: vec![(0.0, 1.0)],
                    }];
                }
            }
        }
        let observed = self
            .branches
            .iter()
            .flatten()
            .flat_map(|b| b.rewards.iter().map(|r| r.0.abs()))
            .fold(0.0, f64::max);
        let mdp = FiniteMdp {
            name: self.name,
            n_states: self.n_states,
            n_actions: self.n_actions,
            horizon: self.horizon,
            discount: self.discount,
            initial: self.initial,
            branches: self.branches,
            terminal: self.terminal,
            r_max: self.r_max.unwrap_or(observed),
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_transition_is_rejected() {
        let r = FiniteMdpBuilder::new("broken", 2, 2, 1)
            .start(0)
            .terminal(1)
            .branch(0, 0, 1, 1.0, vec![(1.0, 1.0)])
            .build();
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn unnormalized_reward_law_is_rejected() {
        let r = FiniteMdpBuilder::new("broken", 2, 1, 1)
            .start(0)
            .terminal(1)
            .branch(0, 0, 1, 1.0, vec![(1.0, 0.5), (2.0, 0.4)])
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn declared_r_max_is_enforced() {
        let r = FiniteMdpBuilder::new("broken", 2, 1, 1)
            .start(0)
            .terminal(1)
            .r_max(1.0)
            .branch(0, 0, 1, 1.0, vec![(2.0, 1.0)])
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn json_snapshot_roundtrip() {
        let mdp = FiniteMdpBuilder::new("tiny", 2, 1, 3)
            .start(0)
            .terminal(1)
            .branch(0, 0, 0, 0.5, vec![(1.0, 1.0)])
            .branch(0, 0, 1, 0.5, vec![(-1.0, 0.25), (0.0, 0.75)])
            .build()
            .unwrap();
        let json = serde_json::to_string(&mdp).unwrap();
        let back: FiniteMdp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mdp);
        assert_eq!(mdp.transition_prob(0, 0, 1), 0.5);
        assert_eq!(mdp.r_max(), 1.0);
    }
}

use std::collections::BTreeMap;

use crate::cpt::{cpt_value_exact, CptSpec, DiscreteDist, MERGE_TOL};
use crate::env::{discounted_sum, Action, EnvState, Environment, FiniteMdp, Step, Trajectory};
use crate::error::{Error, Result};
use crate::phi::PhiFunction;
use crate::policy::{DiscretePolicy, HistoryView, PolicyParams};

/// Default bound on enumerated trajectories and propagated states.
pub const DEFAULT_CAP: usize = 1_000_000;

fn quantize(x: f64) -> i64 {
    (x / MERGE_TOL).round() as i64
}

struct Dfs<'a, P: ?Sized, V> {
    mdp: &'a FiniteMdp,
    policy: &'a P,
    cap: usize,
    count: usize,
    steps: Vec<Step>,
    visit: V,
}

impl<P, V> Dfs<'_, P, V>
where
    P: DiscretePolicy + ?Sized,
    V: FnMut(&[Step], f64) -> Result<()>,
{
    fn leaf(&mut self, prob: f64) -> Result<()> {
        self.count += 1;
        if self.count > self.cap {
            return Err(Error::Resource {
                what: "enumerated trajectories".into(),
                count: self.count,
                cap: self.cap,
            });
        }
        (self.visit)(&self.steps, prob)
    }

    fn walk(&mut self, s: usize, t: usize, partial: f64, factor: f64, prob: f64) -> Result<()> {
        if t >= self.mdp.horizon() || self.mdp.terminal(s) {
            return self.leaf(prob);
        }
        let state = EnvState::Discrete(s);
        let probs = self.policy.action_probs(&HistoryView {
            t,
            state: &state,
            partial_return: partial,
            past: &self.steps,
        })?;
        let discount = self.mdp.discount();
        for (a, &pa) in probs.iter().enumerate() {
            if pa <= 0.0 {
                continue;
            }
            for b in self.mdp.branches(s, a) {
                for &(r, pr) in &b.rewards {
                    let q = prob * pa * b.prob * pr;
                    if q <= 0.0 {
                        continue;
                    }
                    self.steps.push(Step {
                        state: state.clone(),
                        action: Action::Discrete(a),
                        reward: r,
                    });
                    self.walk(b.next, t + 1, partial + factor * r, factor * discount, q)?;
                    self.steps.pop();
                }
            }
        }
        Ok(())
    }
}

/// Depth-first walk over every trajectory with positive probability;
/// `visit` receives the steps and the trajectory probability. Returns the
/// number of trajectories.
pub fn for_each_trajectory<P>(
    mdp: &FiniteMdp,
    policy: &P,
    cap: usize,
    visit: impl FnMut(&[Step], f64) -> Result<()>,
) -> Result<usize>
where
    P: DiscretePolicy + ?Sized,
{
    let mut dfs = Dfs {
        mdp,
        policy,
        cap,
        count: 0,
        steps: Vec::with_capacity(mdp.horizon()),
        visit,
    };
    for (s, &p) in mdp.initial().iter().enumerate() {
        if p > 0.0 {
            dfs.walk(s, 0, 0.0, 1.0, p)?;
        }
    }
    Ok(dfs.count)
}

/// Exact law of the return by trajectory enumeration.
pub fn enumerate_return_distribution<P>(mdp: &FiniteMdp, policy: &P) -> Result<DiscreteDist>
where
    P: DiscretePolicy + ?Sized,
{
    let discount = mdp.discount();
    let mut atoms = Vec::new();
    for_each_trajectory(mdp, policy, DEFAULT_CAP, |steps, p| {
        atoms.push((discounted_sum(steps.iter().map(|s| s.reward), discount), p));
        Ok(())
    })?;
    DiscreteDist::from_enumeration(atoms)
}

/// Exact law of the return by forward propagation over `(state, partial
/// return)` pairs; valid for policies that read nothing else of the history.
pub fn propagate_return_distribution<P>(mdp: &FiniteMdp, policy: &P) -> Result<DiscreteDist>
where
    P: DiscretePolicy + ?Sized,
{
    if !policy.is_sum_markov() {
        return Err(Error::unsupported(
            "forward propagation needs a policy of (state, time, partial return)",
        ));
    }
    let discount = mdp.discount();
    let mut frontier: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
    for (s, &p) in mdp.initial().iter().enumerate() {
        if p > 0.0 {
            frontier.insert((s, 0), (0.0, p));
        }
    }
    let mut finished: Vec<(f64, f64)> = Vec::new();
    let mut factor = 1.0;
    for t in 0..mdp.horizon() {
        let mut next: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
        for (&(s, _), &(sigma, prob)) in &frontier {
            if mdp.terminal(s) {
                finished.push((sigma, prob));
                continue;
            }
            let state = EnvState::Discrete(s);
            let probs = policy.action_probs(&HistoryView {
                t,
                state: &state,
                partial_return: sigma,
                past: &[],
            })?;
            for (a, &pa) in probs.iter().enumerate() {
                if pa <= 0.0 {
                    continue;
                }
                for b in mdp.branches(s, a) {
                    for &(r, pr) in &b.rewards {
                        let q = prob * pa * b.prob * pr;
                        if q <= 0.0 {
                            continue;
                        }
                        let sigma2 = sigma + factor * r;
                        next.entry((b.next, quantize(sigma2))).or_insert((sigma2, 0.0)).1 += q;
                    }
                }
            }
        }
        if next.len() > DEFAULT_CAP {
            return Err(Error::Resource {
                what: "propagated (state, partial return) pairs".into(),
                count: next.len(),
                cap: DEFAULT_CAP,
            });
        }
        frontier = next;
        factor *= discount;
    }
    finished.extend(frontier.into_values());
    DiscreteDist::from_enumeration(finished)
}

/// Law of the return, propagated when the policy allows it and enumerated otherwise.
pub fn return_distribution<P>(mdp: &FiniteMdp, policy: &P) -> Result<DiscreteDist>
where
    P: DiscretePolicy + ?Sized,
{
    if policy.is_sum_markov() {
        propagate_return_distribution(mdp, policy)
    } else {
        enumerate_return_distribution(mdp, policy)
    }
}

pub fn exact_cpt<P>(mdp: &FiniteMdp, policy: &P, spec: &CptSpec) -> Result<f64>
where
    P: DiscretePolicy + ?Sized,
{
    Ok(cpt_value_exact(&return_distribution(mdp, policy)?, spec))
}

/// `E[φ(R(τ)) Σ_t ∇_θ log π_θ(a_t | h_t)]` summed over all trajectories,
/// with φ taken from the exact return law.
pub fn exact_policy_gradient(mdp: &FiniteMdp, policy: &PolicyParams, spec: &CptSpec) -> Result<Vec<f64>> {
    let law = return_distribution(mdp, policy)?;
    let phi = PhiFunction::exact(&law, spec);
    let discount = mdp.discount();
    let mut grad = vec![0.0; policy.n_params()];
    for_each_trajectory(mdp, policy, DEFAULT_CAP, |steps, prob| {
        let traj = Trajectory::new(steps.to_vec(), discount);
        let weight = prob * phi.eval(traj.return_value).value();
        policy.for_each_decision(&traj, discount, |f, a| policy.accumulate_score(f, a, weight, &mut grad))
    })?;
    Ok(grad)
}

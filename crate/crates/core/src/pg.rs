//! CPT policy gradient.
//!
//! Each iteration rolls out a batch, estimates `φ(R(τ))` from the batch
//! (or exactly, on finite MDPs) and ascends
//! `(1/n) Σ_j [φ(R(τ_j)) Σ_t ∇ log π(a_t|h_t) + α Σ_t ∇ H(π(·|h_t))]`.
//! Rollouts run in parallel on independent streams keyed by
//! `(seed, iteration, index)`; the reduction runs in index order, so results
//! do not depend on the thread count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpt::{cpt_value_empirical, CptSpec};
use crate::env::{sample_trajectory, Environment, Trajectory};
use crate::error::{Error, Result};
use crate::oracle::return_distribution;
use crate::phi::{AffineQuantiles, PhiFunction, QuantileTable};
use crate::policy::{PolicyParams, RolloutPolicy};
use crate::rng::{derive_seed, stream};

const CHUNK: usize = 256;
const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMethod {
    #[default]
    Quantile,
    PiecewiseAffine,
    /// φ from the exact return law; finite MDPs with discrete policies only.
    ExactOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

/// Per-iteration multiplicative schedule `initial · rate^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub initial: f64,
    pub rate: f64,
}

impl Schedule {
    pub fn at(&self, k: usize) -> f64 {
        self.initial * self.rate.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_n: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub optimizer: Optimizer,
    /// Entropy bonus weight, decaying geometrically.
    pub entropy: Schedule,
    pub phi_method: PhiMethod,
    pub seed: u64,
    /// One scoring trajectory per iteration plus a separate quantile batch.
    pub literal_single_trajectory: bool,
    /// Iterations run with the risk-neutral objective before switching.
    pub pretrain_iterations: usize,
    /// Temperature schedule for `softmax_tanh` policies.
    pub exploration: Option<Schedule>,
    /// Keep a parameter snapshot every this many iterations (0: none).
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_n: 1000,
            iterations: 1000,
            step_size: 1e-2,
            optimizer: Optimizer::default(),
            entropy: Schedule {
                initial: 0.05,
                rate: 0.999,
            },
            phi_method: PhiMethod::Quantile,
            seed: 0,
            literal_single_trajectory: false,
            pretrain_iterations: 0,
            exploration: None,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_n < 2 {
            return Err(Error::validation(format!("batch_n must be at least 2, got {}", self.batch_n)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::validation("step size must be positive"));
        }
        if !(self.entropy.initial >= 0.0 && self.entropy.rate > 0.0 && self.entropy.rate <= 1.0) {
            return Err(Error::validation("entropy schedule needs initial >= 0 and decay in (0, 1]"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::validation("Adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        if let Some(s) = self.exploration {
            if !(s.initial > 0.0 && s.rate > 0.0) {
                return Err(Error::validation("exploration schedule must be positive"));
            }
        }
        Ok(())
    }
}

/// How one gradient estimate is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSettings {
    pub batch_n: usize,
    pub phi_method: PhiMethod,
    pub entropy_weight: f64,
    pub literal_single_trajectory: bool,
}

impl GradientSettings {
    pub fn new(batch_n: usize, phi_method: PhiMethod) -> Self {
        GradientSettings {
            batch_n,
            phi_method,
            entropy_weight: 0.0,
            literal_single_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientDiagnostics {
    /// Returns of the quantile batch, in stream order.
    pub returns: Vec<f64>,
    pub cpt_estimate: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub trajectories: usize,
}

fn phi_function<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyParams,
    spec: &CptSpec,
    method: PhiMethod,
    returns: &[f64],
) -> Result<Box<dyn Fn(f64) -> f64 + Sync>> {
    if spec.has_identity_weights() {
        let u = spec.utility.clone();
        return Ok(Box::new(move |v| u.gain(v) - u.loss(v)));
    }
    let phi = match method {
        PhiMethod::Quantile => PhiFunction::quantile(&QuantileTable::from_returns(returns, spec)?, spec),
        PhiMethod::PiecewiseAffine => {
            let table = QuantileTable::from_returns(returns, spec)?;
            PhiFunction::piecewise_affine(&AffineQuantiles::from_table(&table, spec)?, spec)
        }
        PhiMethod::ExactOracle => {
            let mdp = env
                .as_finite()
                .ok_or_else(|| Error::unsupported("the exact φ oracle needs a finite MDP"))?;
            PhiFunction::exact(&return_distribution(mdp, policy)?, spec)
        }
    };
    Ok(Box::new(move |v| phi.eval(v).value()))
}

fn rollouts<E: Environment + ?Sized, P: RolloutPolicy + ?Sized>(
    env: &E,
    policy: &P,
    seed: u64,
    iteration: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<Trajectory>> {
    range
        .into_par_iter()
        .map(|j| sample_trajectory(env, policy, &mut stream(seed, iteration, j as u64)))
        .collect()
}

/// One CPT policy-gradient estimate from a fresh batch.
pub fn estimate_policy_gradient<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyParams,
    spec: &CptSpec,
    settings: &GradientSettings,
    seed: u64,
    iteration: u64,
) -> Result<(Vec<f64>, GradientDiagnostics)> {
    let n = settings.batch_n;
    if n < 2 {
        return Err(Error::argument(format!("batch size must be at least 2, got {n}")));
    }
    let batch = rollouts(env, policy, seed, iteration, 0..n)?;
    let returns: Vec<f64> = batch.iter().map(|t| t.return_value).collect();
    let phi = phi_function(env, policy, spec, settings.phi_method, &returns)?;
    let (scored, trajectories) = if settings.literal_single_trajectory {
        (rollouts(env, policy, seed, iteration, n..n + 1)?, n + 1)
    } else {
        (batch, n)
    };
    let phis: Vec<f64> = scored.iter().map(|t| phi(t.return_value)).collect();
    let discount = env.discount();
    let alpha = if policy.is_discrete() { settings.entropy_weight } else { 0.0 };
    let d = policy.n_params();
    let mut grad = vec![0.0; d];
    for (chunk, phi_chunk) in scored.chunks(CHUNK).zip(phis.chunks(CHUNK)) {
        let parts: Vec<(Vec<f64>, Option<Vec<f64>>)> = chunk
            .par_iter()
            .map(|traj| {
                let score = policy.trajectory_score(traj, discount)?;
                let entropy = if alpha > 0.0 {
                    let mut g = vec![0.0; d];
                    policy.for_each_decision(traj, discount, |f, _| {
                        policy.accumulate_entropy_gradient(f, 1.0, &mut g).map(|_| ())
                    })?;
                    Some(g)
                } else {
                    None
                };
                Ok((score, entropy))
            })
            .collect::<Result<_>>()?;
        for ((score, entropy), &w) in parts.iter().zip(phi_chunk) {
            for (g, s) in grad.iter_mut().zip(score) {
                *g += w * s;
            }
            if let Some(e) = entropy {
                for (g, h) in grad.iter_mut().zip(e) {
                    *g += alpha * h;
                }
            }
        }
    }
    let m = scored.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    let cpt_estimate = cpt_value_empirical(&returns, spec)?;
    let phi_min = phis.iter().copied().fold(f64::INFINITY, f64::min);
    let phi_max = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        grad,
        GradientDiagnostics {
            returns,
            cpt_estimate,
            phi_min,
            phi_max,
            trajectories,
        },
    ))
}

/// Gradient-ascent state for SGD or Adam.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    optimizer: Optimizer,
    step_size: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, step_size: f64, dim: usize) -> Self {
        OptimizerState {
            optimizer,
            step_size,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// `θ ← θ + step`, ascending the gradient.
    pub fn ascend(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.optimizer {
            Optimizer::Sgd => {
                for (x, g) in theta.iter_mut().zip(grad) {
                    *x += self.step_size * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..theta.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    theta[i] += self.step_size * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    /// Batch CPT estimate under the target objective, per iteration.
    pub cpt_estimates: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Trajectories sampled up to and including each iteration.
    pub trajectory_counts: Vec<usize>,
    pub snapshots: Vec<Snapshot>,
    pub final_policy: PolicyParams,
    pub trajectories: usize,
}

impl TrainResult {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("iter,cpt_estimate,grad_norm\n");
        for (k, (c, g)) in self.cpt_estimates.iter().zip(&self.grad_norms).enumerate() {
            let _ = writeln!(out, "{k},{c},{g}");
        }
        out
    }

    /// Curve with the cumulative trajectory budget, for budget-matched comparisons.
    pub fn budget_curve_csv(&self) -> String {
        let mut out = String::from("iter,trajectories,cpt_estimate,grad_norm\n");
        for k in 0..self.cpt_estimates.len() {
            let _ = writeln!(
                out,
                "{k},{},{},{}",
                self.trajectory_counts[k], self.cpt_estimates[k], self.grad_norms[k]
            );
        }
        out
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_finite(iteration: usize, grad: &[f64], params: &[f64]) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) && params.iter().all(|p| p.is_finite()) {
        return Ok(());
    }
    let bad = grad.iter().filter(|g| !g.is_finite()).count();
    let finite_max = grad.iter().filter(|g| g.is_finite()).fold(0.0f64, |m, g| m.max(g.abs()));
    Err(Error::NonFinite {
        iteration,
        detail: format!(
            "{bad} of {} gradient entries non-finite (largest finite |g| = {finite_max:e}); parameters finite: {}",
            grad.len(),
            params.iter().all(|p| p.is_finite())
        ),
    })
}

/// Runs the CPT policy gradient from `initial`.
pub fn train<E: Environment + ?Sized>(
    env: &E,
    initial: &PolicyParams,
    spec: &CptSpec,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    spec.validate()?;
    initial.validate()?;
    initial.check_compatible(env.observation_space(), env.action_space())?;
    let mut policy = initial.clone();
    let neutral = CptSpec::expectation();
    let mut opt = OptimizerState::new(config.optimizer, config.step_size, policy.n_params());
    let mut result = TrainResult {
        cpt_estimates: Vec::with_capacity(config.iterations),
        grad_norms: Vec::with_capacity(config.iterations),
        trajectory_counts: Vec::with_capacity(config.iterations),
        snapshots: Vec::new(),
        final_policy: policy.clone(),
        trajectories: 0,
    };
    for k in 0..config.iterations {
        if let (Some(s), Some(_)) = (config.exploration, policy.temperature()) {
            policy.set_temperature(s.at(k))?;
        }
        let active = if k < config.pretrain_iterations { &neutral } else { spec };
        let settings = GradientSettings {
            batch_n: config.batch_n,
            phi_method: config.phi_method,
            entropy_weight: config.entropy.at(k),
            literal_single_trajectory: config.literal_single_trajectory,
        };
        let (grad, diag) = estimate_policy_gradient(env, &policy, active, &settings, config.seed, k as u64)?;
        check_finite(k, &grad, policy.params())?;
        opt.ascend(policy.params_mut(), &grad);
        check_finite(k, &grad, policy.params())?;
        result.trajectories += diag.trajectories;
        result.trajectory_counts.push(result.trajectories);
        result.cpt_estimates.push(if std::ptr::eq(active, spec) {
            diag.cpt_estimate
        } else {
            cpt_value_empirical(&diag.returns, spec)?
        });
        result.grad_norms.push(norm(&grad));
        if config.snapshot_every > 0 && (k + 1) % config.snapshot_every == 0 {
            result.snapshots.push(Snapshot {
                iteration: k + 1,
                params: policy.params().to_vec(),
            });
        }
    }
    result.final_policy = policy;
    Ok(result)
}

/// Equal-width histogram of returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal-width bins over the sample range; a single bin when all
    /// samples coincide.
    pub fn new(samples: &[f64], bins: usize) -> Self {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() || hi <= lo || bins <= 1 {
            return Histogram {
                edges: if samples.is_empty() { vec![] } else { vec![lo, hi] },
                counts: if samples.is_empty() { vec![] } else { vec![samples.len()] },
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0; bins];
        for &x in samples {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn to_csv(&self) -> String {
        let total: usize = self.counts.iter().sum();
        let mut out = String::from("bin_left,bin_right,count,frequency\n");
        for (i, &c) in self.counts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{c},{}",
                self.edges[i],
                self.edges[i + 1],
                c as f64 / total.max(1) as f64
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cpt_estimate: f64,
    pub mean: f64,
    pub std: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
    pub histogram: Histogram,
    #[serde(skip)]
    pub returns: Vec<f64>,
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rolls out `n_episodes` episodes and summarizes their returns.
pub fn evaluate<E: Environment + ?Sized, P: RolloutPolicy + ?Sized>(
    env: &E,
    policy: &P,
    spec: &CptSpec,
    n_episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    if n_episodes == 0 {
        return Err(Error::argument("evaluation needs at least one episode"));
    }
    let eval_seed = derive_seed(&[seed, EVAL_STREAM]);
    let returns: Vec<f64> = rollouts(env, policy, eval_seed, 0, 0..n_episodes)?
        .into_iter()
        .map(|t| t.return_value)
        .collect();
    let mut sorted = returns.clone();
    sorted.sort_by(f64::total_cmp);
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(Evaluation {
        cpt_estimate: cpt_value_empirical(&returns, spec)?,
        mean,
        std: var.sqrt(),
        p05: quantile(&sorted, 0.05),
        p50: quantile(&sorted, 0.5),
        p95: quantile(&sorted, 0.95),
        histogram: Histogram::new(&returns, 20),
        returns,
    })
}

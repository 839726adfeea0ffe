//! Zeroth-order CPT optimization by simultaneous perturbation (SPSA).
//!
//! Each iteration perturbs all parameters at once along a Rademacher
//! direction `Δ`, estimates the CPT value at `θ ± δΔ` from fresh rollouts
//! and forms `(Ĉ⁺ − Ĉ⁻) / (2δΔ_i)`. Both evaluations share their random
//! streams (common random numbers).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpt::{cpt_value_empirical, CptSpec};
use crate::env::{sample_trajectory, Environment};
use crate::error::{Error, Result};
use crate::pg::{check_finite, norm, TrainResult};
use crate::policy::{PolicyParams, RolloutPolicy};
use crate::rng::{derive_seed, stream, SimRng};

const PERTURBATION_STREAM: u64 = 0x5B5A;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub batch_n: usize,
    pub iterations: usize,
    /// `a_k = a0 / (k+1)^step_exponent`.
    pub a0: f64,
    pub step_exponent: f64,
    /// `δ_k = delta0 / (k+1)^perturbation_exponent`.
    pub delta0: f64,
    pub perturbation_exponent: f64,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            batch_n: 1000,
            iterations: 1000,
            a0: 0.5,
            step_exponent: 0.602,
            delta0: 0.2,
            perturbation_exponent: 0.101,
            seed: 0,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_n < 1 {
            return Err(Error::validation("SPSA batch_n must be positive"));
        }
        if !(self.delta0 > 0.0 && self.a0 > 0.0) {
            return Err(Error::validation("SPSA a0 and delta0 must be positive"));
        }
        let ok = |e: f64| e > 0.0 && e <= 1.0;
        if !(ok(self.step_exponent) && ok(self.perturbation_exponent)) {
            return Err(Error::validation("SPSA schedule exponents must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn step(&self, k: usize) -> f64 {
        self.a0 / ((k + 1) as f64).powf(self.step_exponent)
    }

    pub fn perturbation(&self, k: usize) -> f64 {
        self.delta0 / ((k + 1) as f64).powf(self.perturbation_exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaEstimate {
    pub gradient: Vec<f64>,
    pub value_plus: f64,
    pub value_minus: f64,
}

/// SPSA gradient of an arbitrary objective at `theta`.
pub fn spsa_gradient_with(
    theta: &[f64],
    delta: f64,
    rng: &mut SimRng,
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<SpsaEstimate> {
    if !(delta > 0.0) {
        return Err(Error::argument(format!("perturbation size must be positive, got {delta}")));
    }
    let signs: Vec<f64> = (0..theta.len()).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let plus: Vec<f64> = theta.iter().zip(&signs).map(|(t, s)| t + delta * s).collect();
    let minus: Vec<f64> = theta.iter().zip(&signs).map(|(t, s)| t - delta * s).collect();
    let value_plus = objective(&plus)?;
    let value_minus = objective(&minus)?;
    let diff = value_plus - value_minus;
    Ok(SpsaEstimate {
        gradient: signs.iter().map(|s| diff / (2.0 * delta * s)).collect(),
        value_plus,
        value_minus,
    })
}

fn batch_cpt<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyParams,
    spec: &CptSpec,
    batch_n: usize,
    seed: u64,
    iteration: u64,
) -> Result<f64> {
    let returns: Vec<f64> = (0..batch_n)
        .into_par_iter()
        .map(|j| sample_trajectory(env, policy, &mut stream(seed, iteration, j as u64)).map(|t| t.return_value))
        .collect::<Result<_>>()?;
    cpt_value_empirical(&returns, spec)
}

/// SPSA gradient of the empirical CPT value of `policy` with perturbation `delta`.
pub fn spsa_gradient<E: Environment + ?Sized>(
    env: &E,
    policy: &PolicyParams,
    spec: &CptSpec,
    delta: f64,
    batch_n: usize,
    seed: u64,
    iteration: u64,
) -> Result<SpsaEstimate> {
    let mut rng = stream(derive_seed(&[seed, PERTURBATION_STREAM]), iteration, 0);
    let mut probe = policy.clone();
    spsa_gradient_with(policy.params(), delta, &mut rng, |theta| {
        probe.params_mut().copy_from_slice(theta);
        batch_cpt(env, &probe, spec, batch_n, seed, iteration)
    })
}

/// `θ_{k+1} = θ_k + a_k ĝ_k` with SPSA gradients; the recorded CPT estimate
/// is the mean of the two perturbed evaluations.
pub fn train_spsa<E: Environment + ?Sized>(
    env: &E,
    initial: &PolicyParams,
    spec: &CptSpec,
    config: &SpsaConfig,
) -> Result<TrainResult> {
    config.validate()?;
    spec.validate()?;
    initial.validate()?;
    initial.check_compatible(env.observation_space(), env.action_space())?;
    let mut policy = initial.clone();
    let mut result = TrainResult {
        cpt_estimates: Vec::with_capacity(config.iterations),
        grad_norms: Vec::with_capacity(config.iterations),
        trajectory_counts: Vec::with_capacity(config.iterations),
        snapshots: Vec::new(),
        final_policy: policy.clone(),
        trajectories: 0,
    };
    for k in 0..config.iterations {
        let est = spsa_gradient(env, &policy, spec, config.perturbation(k), config.batch_n, config.seed, k as u64)?;
        let a = config.step(k);
        for (x, g) in policy.params_mut().iter_mut().zip(&est.gradient) {
            *x += a * g;
        }
        check_finite(k, &est.gradient, policy.params())?;
        result.trajectories += 2 * config.batch_n;
        result.trajectory_counts.push(result.trajectories);
        result.cpt_estimates.push(0.5 * (est.value_plus + est.value_minus));
        result.grad_norms.push(norm(&est.gradient));
    }
    result.final_policy = policy;
    Ok(result)
}

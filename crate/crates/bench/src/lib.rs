//! Benchmarks for the hot paths of the core crate: CPT estimation, φ tables,
//! rollouts, gradient estimates and exact oracle values.

use std::hint::black_box;

use criterion::Criterion;
use cptrl_core::cpt::{cpt_value_empirical, CptSpec, UtilitySpec, WeightSpec};
use cptrl_core::env::{sample_trajectory, utility_grid_env, FiniteMdp};
use cptrl_core::pg::{estimate_policy_gradient, GradientSettings, PhiMethod};
use cptrl_core::phi::{phi_quantile, QuantileTable};
use cptrl_core::policy::{HistoryAbstraction, PolicyParams};
use cptrl_core::rng::seeded;
use cptrl_core::exact_cpt;
use rand::Rng;

fn prospect_spec() -> CptSpec {
    CptSpec::new(UtilitySpec::kahneman_tversky(2.25, 0.88).unwrap(), WeightSpec::w_rs(), WeightSpec::w_ra()).unwrap()
}

fn returns(n: usize) -> Vec<f64> {
    let mut rng = seeded(1);
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn grid_policy(mdp: &FiniteMdp) -> PolicyParams {
    PolicyParams::softmax(HistoryAbstraction::Stationary, mdp.n_states(), mdp.n_actions()).unwrap()
}

pub fn benchmarks(c: &mut Criterion) {
    let spec = prospect_spec();
    let batch = returns(1000);

    c.bench_function("cpt_value_empirical/1000", |b| {
        b.iter(|| cpt_value_empirical(black_box(&batch), &spec).unwrap())
    });
    c.bench_function("quantile_table/1000", |b| {
        b.iter(|| QuantileTable::from_returns(black_box(&batch), &spec).unwrap())
    });
    c.bench_function("phi_quantile/1000", |b| b.iter(|| phi_quantile(black_box(0.7), &batch, &spec).unwrap()));

    let mdp = utility_grid_env();
    let policy = grid_policy(&mdp);
    let mut rng = seeded(2);
    c.bench_function("sample_trajectory/utility_grid", |b| {
        b.iter(|| sample_trajectory(&mdp, &policy, &mut rng).unwrap())
    });

    let settings = GradientSettings::new(200, PhiMethod::Quantile);
    let mut iteration = 0;
    c.bench_function("policy_gradient/utility_grid/200", |b| {
        b.iter(|| {
            iteration += 1;
            estimate_policy_gradient(&mdp, &policy, &spec, &settings, 3, iteration).unwrap()
        })
    });

    c.bench_function("exact_cpt/utility_grid", |b| b.iter(|| exact_cpt(&mdp, black_box(&policy), &spec).unwrap()));
}

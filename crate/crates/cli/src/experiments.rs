//! Experiment drivers. Seeds run in parallel; results are gathered in seed
//! order and handed to a single writer.

use cptrl_core::cpt::CptSpec;
use cptrl_core::env::{EnvState, Environment};
use cptrl_core::oracle::{exact_cpt, grid_search_policy, solve_eut_dp, two_action_mix, PolicyGridSpec};
use cptrl_core::pg::{evaluate, train, Evaluation, Histogram, TrainConfig, TrainResult};
use cptrl_core::policy::{DiscretePolicy, HistoryAbstraction, HistoryView, ModeAction, PolicyParams};
use cptrl_core::spsa::{train_spsa, SpsaConfig};
use cptrl_core::study::{bias_slope, median, report_batch_bias, batch_bias_csv};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{Deployment, Experiment, ExperimentKind};
use crate::error::CliError;
use crate::output::{median_budget_curve, median_curve, num, nums, opt_num, Outputs};

const HISTOGRAM_BINS: usize = 20;

pub fn run(x: &Experiment) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let body = match x.config.kind {
        ExperimentKind::TrainPg => train_single(x, Method::Pg, &mut out)?,
        ExperimentKind::TrainSpsa => train_single(x, Method::Spsa, &mut out)?,
        ExperimentKind::ComparePgSpsa => compare_pg_spsa(x, &mut out)?,
        ExperimentKind::OracleVerify => oracle_verify(x, &mut out)?,
        ExperimentKind::BatchBiasStudy => batch_bias_study(x, &mut out)?,
        ExperimentKind::MarkovVsNonmarkov => markov_vs_nonmarkov(x, &mut out)?,
        ExperimentKind::ElectricityEval => electricity_eval(x, &mut out)?,
    };
    let mut result = Map::new();
    result.insert("schema_version".into(), json!(crate::config::SCHEMA_VERSION));
    result.insert("kind".into(), json!(x.config.kind.name()));
    result.insert("environment".into(), json!(x.env_name));
    result.insert("seeds".into(), json!(x.seeds));
    result.extend(body);
    out.add_json("result.json", &Value::Object(result))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Pg,
    Spsa,
}

/// One finished training run.
struct SeedRun {
    seed: u64,
    train: TrainResult,
    evaluation: Evaluation,
    exact: Option<f64>,
}

impl SeedRun {
    /// Exact CPT value when available, otherwise the evaluation estimate.
    fn final_value(&self) -> f64 {
        self.exact.unwrap_or(self.evaluation.cpt_estimate)
    }

    fn summary(&self) -> Result<Value, CliError> {
        let e = &self.evaluation;
        Ok(json!({
            "seed": self.seed,
            "trajectories": self.train.trajectories,
            "final_cpt_estimate": opt_num(self.train.cpt_estimates.last().copied(), "final CPT estimate")?,
            "exact_cpt": opt_num(self.exact, "exact CPT value")?,
            "evaluation": {
                "cpt_estimate": num(e.cpt_estimate, "evaluation CPT estimate")?,
                "mean": num(e.mean, "evaluation mean")?,
                "std": num(e.std, "evaluation std")?,
                "p05": num(e.p05, "evaluation p05")?,
                "p50": num(e.p50, "evaluation p50")?,
                "p95": num(e.p95, "evaluation p95")?,
            },
        }))
    }
}

fn par_seeds<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T, CliError> + Sync) -> Result<Vec<T>, CliError> {
    seeds.par_iter().map(|&s| f(s)).collect()
}

fn run_method(
    x: &Experiment,
    method: Method,
    spec: &CptSpec,
    abstraction: &HistoryAbstraction,
    seed: u64,
) -> Result<SeedRun, CliError> {
    let env = x.env.env();
    let init = x.initial_policy(abstraction.clone(), seed).map_err(CliError::runtime)?;
    let result = match method {
        Method::Pg => {
            let cfg = TrainConfig {
                seed,
                ..x.train().clone()
            };
            train(env, &init, spec, &cfg)
        }
        Method::Spsa => {
            let cfg = SpsaConfig {
                seed,
                ..x.spsa().clone()
            };
            train_spsa(env, &init, spec, &cfg)
        }
    }
    .map_err(CliError::runtime)?;
    finish(x, spec, result, seed)
}

fn finish(x: &Experiment, spec: &CptSpec, train: TrainResult, seed: u64) -> Result<SeedRun, CliError> {
    let env: &dyn Environment = x.env.env();
    let policy = &train.final_policy;
    let evaluation = match x.config.deployment {
        Deployment::Sample => evaluate(env, policy, spec, x.eval_episodes, seed),
        Deployment::Mode => evaluate(env, &ModeAction(policy), spec, x.eval_episodes, seed),
    }
    .map_err(CliError::runtime)?;
    let exact = match (x.env.finite(), x.config.deployment) {
        (Some(mdp), Deployment::Sample) => exact_cpt(mdp, policy, spec).ok(),
        _ => None,
    };
    Ok(SeedRun {
        seed,
        train,
        evaluation,
        exact,
    })
}

/// Curves, pooled histogram, per-seed curves and checkpoints under `prefix`.
fn method_files(out: &mut Outputs, prefix: &str, runs: &[SeedRun]) -> Result<(), CliError> {
    let results: Vec<&TrainResult> = runs.iter().map(|r| &r.train).collect();
    out.add(format!("{prefix}curve.csv"), median_curve(&results));
    out.add(format!("{prefix}budget.csv"), median_budget_curve(&results));
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.evaluation.returns.iter().copied()).collect();
    out.add(format!("{prefix}histogram.csv"), Histogram::new(&pooled, HISTOGRAM_BINS).to_csv());
    for r in runs {
        out.add(format!("{prefix}curve_seed_{}.csv", r.seed), r.train.curve_csv());
        let checkpoint = r.train.final_policy.to_json();
        out.add(format!("{prefix}policy_seed_{}.json", r.seed), checkpoint + "\n");
    }
    Ok(())
}

fn method_summary(runs: &[SeedRun]) -> Result<Value, CliError> {
    let finals: Vec<f64> = runs.iter().map(SeedRun::final_value).collect();
    let pick = |f: fn(&Evaluation) -> f64| median(&runs.iter().map(|r| f(&r.evaluation)).collect::<Vec<_>>());
    Ok(json!({
        "median_final_value": num(median(&finals), "median final value")?,
        "final_values": nums(&finals, "final value")?,
        "median_evaluation": {
            "cpt_estimate": num(pick(|e| e.cpt_estimate), "median CPT estimate")?,
            "mean": num(pick(|e| e.mean), "median mean")?,
            "p05": num(pick(|e| e.p05), "median p05")?,
            "p50": num(pick(|e| e.p50), "median p50")?,
            "p95": num(pick(|e| e.p95), "median p95")?,
        },
        "runs": runs.iter().map(SeedRun::summary).collect::<Result<Vec<_>, _>>()?,
    }))
}

fn train_single(x: &Experiment, method: Method, out: &mut Outputs) -> Result<Map<String, Value>, CliError> {
    let abstraction = x.abstraction()?;
    let runs = par_seeds(&x.seeds, |seed| run_method(x, method, x.spec(), &abstraction, seed))?;
    method_files(out, "", &runs)?;
    let mut body = Map::new();
    body.insert("summary".into(), method_summary(&runs)?);
    Ok(body)
}

fn compare_pg_spsa(x: &Experiment, out: &mut Outputs) -> Result<Map<String, Value>, CliError> {
    let abstraction = x.abstraction()?;
    let pairs = par_seeds(&x.seeds, |seed| {
        let pg = run_method(x, Method::Pg, x.spec(), &abstraction, seed)?;
        let spsa = run_method(x, Method::Spsa, x.spec(), &abstraction, seed)?;
        Ok((pg, spsa))
    })?;
    let (pg, spsa): (Vec<SeedRun>, Vec<SeedRun>) = pairs.into_iter().unzip();
    method_files(out, "pg/", &pg)?;
    method_files(out, "spsa/", &spsa)?;
    let med = |runs: &[SeedRun]| median(&runs.iter().map(SeedRun::final_value).collect::<Vec<_>>());
    let mut body = Map::new();
    body.insert("trajectory_budget".into(), json!(pg[0].train.trajectories));
    body.insert("pg".into(), method_summary(&pg)?);
    body.insert("spsa".into(), method_summary(&spsa)?);
    body.insert("gap".into(), num(med(&pg) - med(&spsa), "PG-SPSA gap")?);
    Ok(body)
}

fn oracle_verify(x: &Experiment, out: &mut Outputs) -> Result<Map<String, Value>, CliError> {
    let mdp = x.env.finite().expect("validated as finite");
    let o = x.config.oracle.clone().unwrap_or_default();
    let spec = x.spec();
    let grid = PolicyGridSpec::with_step(o.edges.len() + 1, o.grid_step).map_err(CliError::runtime)?;
    let res = grid_search_policy(mdp, spec, &grid, |p| {
        two_action_mix(mdp, o.decision_state, o.actions, &o.edges, p)
    })
    .map_err(CliError::runtime)?;
    out.add("grid.csv", res.to_csv());
    let mut body = Map::new();
    let p_star = if res.best_params.len() == 1 {
        num(res.best_params[0], "p_star")?
    } else {
        nums(&res.best_params, "p_star")?
    };
    body.insert("p_star".into(), p_star);
    body.insert("cpt_star".into(), num(res.best_value, "cpt_star")?);
    body.insert("grid_points".into(), json!(res.table.len()));
    if spec.has_identity_weights() {
        let dp = solve_eut_dp(mdp, &spec.utility).map_err(CliError::runtime)?;
        body.insert("eut_dp_value".into(), num(dp.value, "DP value")?);
    }
    Ok(body)
}

/// Probability the policy gives `action` in `state` at time 0.
fn learned_probability(policy: &PolicyParams, state: usize, action: usize) -> cptrl_core::Result<f64> {
    let s = EnvState::Discrete(state);
    let view = HistoryView {
        t: 0,
        state: &s,
        partial_return: 0.0,
        past: &[],
    };
    Ok(policy.action_probs(&view)?[action])
}

fn batch_bias_study(x: &Experiment, out: &mut Outputs) -> Result<Map<String, Value>, CliError> {
    let abstraction = x.abstraction()?;
    let b = x.config.bias.clone().unwrap_or_default();
    let sizes = x.config.batch_sizes.clone().unwrap_or_default();
    let jobs: Vec<(usize, u64)> = sizes.iter().flat_map(|&n| x.seeds.iter().map(move |&s| (n, s))).collect();
    let learned: Vec<f64> = jobs
        .par_iter()
        .map(|&(batch_n, seed)| {
            let init = x.initial_policy(abstraction.clone(), seed).map_err(CliError::runtime)?;
            let cfg = TrainConfig {
                seed,
                batch_n,
                ..x.train().clone()
            };
            let r = train(x.env.env(), &init, x.spec(), &cfg).map_err(CliError::runtime)?;
            learned_probability(&r.final_policy, b.state, b.action).map_err(CliError::runtime)
        })
        .collect::<Result<_, _>>()?;
    let per_batch: Vec<(usize, Vec<f64>)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, learned[i * x.seeds.len()..(i + 1) * x.seeds.len()].to_vec()))
        .collect();
    let rows = report_batch_bias(&per_batch).map_err(CliError::runtime)?;
    out.add("batch_bias.csv", batch_bias_csv(&rows));
    let mut body = Map::new();
    let table = rows
        .iter()
        .map(|r| {
            Ok(json!({
                "batch": r.batch,
                "median_p": num(r.median_p, "median_p")?,
                "q25": num(r.q25, "q25")?,
                "q75": num(r.q75, "q75")?,
            }))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    body.insert("rows".into(), Value::Array(table));
    if let Some(target) = b.target {
        body.insert("target".into(), num(target, "target")?);
        let slope = bias_slope(&rows, target).ok();
        body.insert("log_log_slope".into(), opt_num(slope, "log-log slope")?);
    }
    Ok(body)
}

fn markov_vs_nonmarkov(x: &Experiment, out: &mut Outputs) -> Result<Map<String, Value>, CliError> {
    let horizon = x.env.env().horizon();
    let edges = x.config.sum_edges.clone().unwrap_or_default();
    let markov = HistoryAbstraction::Markov { horizon };
    let augmented = HistoryAbstraction::sum_augmented(horizon, edges).map_err(CliError::runtime)?;
    let pairs = par_seeds(&x.seeds, |seed| {
        let m = run_method(x, Method::Pg, x.spec(), &markov, seed)?;
        let a = run_method(x, Method::Pg, x.spec(), &augmented, seed)?;
        Ok((m, a))
    })?;
    let (m, a): (Vec<SeedRun>, Vec<SeedRun>) = pairs.into_iter().unzip();
    method_files(out, "markov/", &m)?;
    method_files(out, "sum_augmented/", &a)?;
    let med = |runs: &[SeedRun]| median(&runs.iter().map(SeedRun::final_value).collect::<Vec<_>>());
    let mut body = Map::new();
    body.insert("markov".into(), method_summary(&m)?);
    body.insert("sum_augmented".into(), method_summary(&a)?);
    body.insert("gap".into(), num(med(&a) - med(&m), "augmented-Markov gap")?);
    Ok(body)
}

fn electricity_eval(x: &Experiment, out: &mut Outputs) -> Result<Map<String, Value>, CliError> {
    let abstraction = x.abstraction()?;
    let variants = x.config.variants.clone().unwrap_or_default();
    let mut summaries = Map::new();
    for v in &variants {
        let runs = par_seeds(&x.seeds, |seed| run_method(x, Method::Pg, &v.cpt, &abstraction, seed))?;
        method_files(out, &format!("{}/", v.name), &runs)?;
        summaries.insert(v.name.clone(), method_summary(&runs)?);
    }
    let mut body = Map::new();
    body.insert("variants".into(), Value::Object(summaries));
    Ok(body)
}

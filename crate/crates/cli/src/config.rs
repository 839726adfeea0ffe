//! Experiment configuration files and their validation.
//!
//! A config is a JSON object with a `schema_version`, an experiment `kind`
//! and the sections that kind needs. Parse errors carry the line and column
//! reported by the JSON reader; validation errors point at the line where the
//! offending key first appears.

use std::fs;
use std::path::{Path, PathBuf};

use cptrl_core::cpt::CptSpec;
use cptrl_core::env::{
    exp_counterexample, markov_test_env, scaling_grid_env_with_horizon, traffic_grid_env, two_state_counterexample,
    utility_grid_env, ElecParams, ElectricityEnv, Environment, FiniteMdp, PriceSeries, Space, SLOTS,
};
use cptrl_core::pg::TrainConfig;
use cptrl_core::policy::{HistoryAbstraction, HistoryIndex, PolicyParams, RolloutPolicy};
use cptrl_core::rng::{derive_seed, seeded};
use cptrl_core::spsa::SpsaConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EVAL_EPISODES: usize = 10_000;
/// Step size used for neural policies when the config does not set one.
pub const MLP_STEP_SIZE: f64 = 1e-3;
const MLP_INIT_STREAM: u64 = 0x1A17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TrainPg,
    TrainSpsa,
    ComparePgSpsa,
    OracleVerify,
    BatchBiasStudy,
    MarkovVsNonmarkov,
    ElectricityEval,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TrainPg => "train_pg",
            ExperimentKind::TrainSpsa => "train_spsa",
            ExperimentKind::ComparePgSpsa => "compare_pg_spsa",
            ExperimentKind::OracleVerify => "oracle_verify",
            ExperimentKind::BatchBiasStudy => "batch_bias_study",
            ExperimentKind::MarkovVsNonmarkov => "markov_vs_nonmarkov",
            ExperimentKind::ElectricityEval => "electricity_eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    TwoStateCounterexample,
    ExpCounterexample,
    MarkovTestEnv,
    UtilityGrid,
    ScalingGrid {
        n: usize,
        #[serde(default)]
        horizon: Option<usize>,
    },
    TrafficGrid {
        n: usize,
    },
    Electricity {
        /// CSV with header `slot,price`; relative to the config file.
        #[serde(default)]
        prices: Option<PathBuf>,
        #[serde(default)]
        params: ElecParams,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AbstractionConfig {
    Stationary,
    #[default]
    Markov,
    SumAugmented {
        edges: Vec<f64>,
    },
    FullHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Softmax,
    SoftmaxTanh {
        temperature: f64,
    },
    GaussianMlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        input_scale: Option<Vec<f64>>,
    },
}

fn default_hidden() -> Vec<usize> {
    cptrl_core::policy::DEFAULT_HIDDEN.to_vec()
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Softmax
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub grid_step: f64,
    pub decision_state: usize,
    /// `(first, second)`: the grid coordinate is the probability of `second`.
    pub actions: (usize, usize),
    /// Partial-return bin edges; empty gives one probability per decision.
    pub edges: Vec<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_step: 0.01,
            decision_state: 0,
            actions: (0, 1),
            edges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    /// The learned probability is that of `action` in `state` at time 0.
    pub state: usize,
    pub action: usize,
    /// Optimal probability; enables the log-log slope fit when set.
    pub target: Option<f64>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            state: 0,
            action: 1,
            target: None,
        }
    }
}

/// How trained policies act when evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deployment {
    /// Sample actions from the learned law.
    #[default]
    Sample,
    /// Always play the most likely action (the mean for Gaussian policies).
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub cpt: CptSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub environment: EnvConfig,
    #[serde(default)]
    pub cpt: Option<CptSpec>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub spsa: Option<SpsaConfig>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub eval_episodes: Option<usize>,
    #[serde(default)]
    pub deployment: Deployment,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub batch_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub bias: Option<BiasConfig>,
    #[serde(default)]
    pub variants: Option<Vec<Variant>>,
    /// Partial-return bin edges of the sum-augmented policy.
    #[serde(default)]
    pub sum_edges: Option<Vec<f64>>,
}

/// The environment an experiment runs on.
pub enum EnvHandle {
    Finite(FiniteMdp),
    Electricity(ElectricityEnv),
}

impl EnvHandle {
    pub fn env(&self) -> &dyn Environment {
        match self {
            EnvHandle::Finite(m) => m,
            EnvHandle::Electricity(e) => e,
        }
    }

    pub fn finite(&self) -> Option<&FiniteMdp> {
        match self {
            EnvHandle::Finite(m) => Some(m),
            EnvHandle::Electricity(_) => None,
        }
    }
}

/// A validated config together with everything built from it.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: EnvHandle,
    pub env_name: String,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
}

impl Experiment {
    pub fn spec(&self) -> &CptSpec {
        self.config.cpt.as_ref().expect("validated configs carry a CPT spec")
    }

    pub fn train(&self) -> &TrainConfig {
        self.config.train.as_ref().expect("validated configs carry a train section")
    }

    pub fn spsa(&self) -> &SpsaConfig {
        self.config.spsa.as_ref().expect("validated configs carry an spsa section")
    }

    pub fn abstraction(&self) -> Result<HistoryAbstraction, CliError> {
        build_abstraction(&self.config.policy.abstraction, &self.env).map_err(CliError::runtime)
    }

    /// Initial policy for `seed` under the given abstraction.
    pub fn initial_policy(&self, abstraction: HistoryAbstraction, seed: u64) -> cptrl_core::Result<PolicyParams> {
        build_policy(&self.config.policy.model, abstraction, &self.env, seed)
    }
}

/// Reads, parses and validates a config file; `seeds`, when given, replaces
/// the config's seed list before validation.
pub fn load(path: &Path, seeds: Option<Vec<u64>>) -> Result<Experiment, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
    let located = |field: &str, msg: String| {
        let key = field.rsplit('.').next().unwrap_or(field);
        match find_key_line(&text, key) {
            Some(line) => CliError::Config(format!("{}:{line}: {field}: {msg}", path.display())),
            None => CliError::Config(format!("{}: {field}: {msg}", path.display())),
        }
    };
    let mut config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })?;
    if seeds.is_some() {
        config.seeds = seeds;
    }
    if mlp_without_step_size(&text, &config) {
        if let Some(train) = config.train.as_mut() {
            train.step_size = MLP_STEP_SIZE;
        }
    }
    let base = path.parent().unwrap_or(Path::new("."));
    validate(&config, &located)?;
    let env = build_env(&config.environment, base).map_err(|e| located("environment", e.to_string()))?;
    let env_name = env_label(&config.environment);
    let experiment = Experiment {
        seeds: config.seeds.clone().unwrap_or_else(|| vec![0]),
        eval_episodes: config.eval_episodes.unwrap_or(DEFAULT_EVAL_EPISODES),
        env,
        env_name,
        config,
    };
    check_against_env(&experiment, &located)?;
    Ok(experiment)
}

/// 1-based line of the first occurrence of `"key"` in the raw text.
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

fn mlp_without_step_size(text: &str, config: &ExperimentConfig) -> bool {
    if !matches!(config.policy.model, ModelConfig::GaussianMlp { .. }) {
        return false;
    }
    let raw: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(_) => return false,
    };
    raw.get("train").is_some_and(|t| t.get("step_size").is_none())
}

type Locate<'a> = dyn Fn(&str, String) -> CliError + 'a;

fn validate(c: &ExperimentConfig, located: &Locate<'_>) -> Result<(), CliError> {
    use ExperimentKind::*;
    if c.schema_version != SCHEMA_VERSION {
        return Err(located(
            "schema_version",
            format!("unsupported schema version {}, expected {SCHEMA_VERSION}", c.schema_version),
        ));
    }
    if let Some(seeds) = &c.seeds {
        if seeds.is_empty() {
            return Err(located("seeds", "seed list must not be empty".into()));
        }
    }
    if c.eval_episodes == Some(0) {
        return Err(located("eval_episodes", "must be at least 1".into()));
    }
    let require = |present: bool, field: &str| {
        if present {
            Ok(())
        } else {
            Err(located(field, format!("required for experiment kind {}", c.kind.name())))
        }
    };
    require(c.cpt.is_some() || c.kind == ElectricityEval, "cpt")?;
    if let Some(spec) = &c.cpt {
        spec.validate().map_err(|e| located("cpt", e.to_string()))?;
    }
    let needs_train = matches!(
        c.kind,
        TrainPg | ComparePgSpsa | BatchBiasStudy | MarkovVsNonmarkov | ElectricityEval
    );
    if needs_train {
        require(c.train.is_some(), "train")?;
    }
    if matches!(c.kind, TrainSpsa | ComparePgSpsa) {
        require(c.spsa.is_some(), "spsa")?;
    }
    if let Some(t) = &c.train {
        t.validate().map_err(|e| located("train", e.to_string()))?;
    }
    if let Some(s) = &c.spsa {
        s.validate().map_err(|e| located("spsa", e.to_string()))?;
    }
    match c.kind {
        ComparePgSpsa => {
            let (t, s) = (c.train.as_ref().unwrap(), c.spsa.as_ref().unwrap());
            if t.batch_n != 2 * s.batch_n || t.iterations != s.iterations {
                return Err(located(
                    "spsa",
                    format!(
                        "equal trajectory budgets need spsa.batch_n = train.batch_n / 2 and equal iterations \
                         (train: {} x {}, spsa: 2 x {} x {})",
                        t.batch_n, t.iterations, s.batch_n, s.iterations
                    ),
                ));
            }
        }
        OracleVerify => {
            let o = c.oracle.clone().unwrap_or_default();
            if !(o.grid_step > 0.0 && o.grid_step <= 1.0) {
                return Err(located("grid_step", format!("must lie in (0, 1], got {}", o.grid_step)));
            }
        }
        BatchBiasStudy => {
            let sizes = c.batch_sizes.as_deref().unwrap_or(&[]);
            if sizes.len() < cptrl_core::study::MIN_BATCH_SIZES {
                return Err(located("batch_sizes", "needs at least two batch sizes".into()));
            }
            if sizes.iter().any(|&b| b < 2) {
                return Err(located("batch_sizes", "every batch size must be at least 2".into()));
            }
            let runs = c.seeds.as_ref().map_or(1, Vec::len);
            if runs < cptrl_core::study::MIN_RUNS_PER_BATCH {
                return Err(located(
                    "seeds",
                    format!(
                        "batch bias study needs at least {} seeds, got {runs}",
                        cptrl_core::study::MIN_RUNS_PER_BATCH
                    ),
                ));
            }
        }
        MarkovVsNonmarkov => {
            let edges = c.sum_edges.as_deref().unwrap_or(&[]);
            if edges.is_empty() {
                return Err(located("sum_edges", "needs at least one bin edge".into()));
            }
            HistoryAbstraction::sum_augmented(1, edges.to_vec()).map_err(|e| located("sum_edges", e.to_string()))?;
        }
        ElectricityEval => {
            let variants = c.variants.as_deref().unwrap_or(&[]);
            if variants.is_empty() {
                return Err(located("variants", "needs at least one named CPT variant".into()));
            }
            for (i, v) in variants.iter().enumerate() {
                v.cpt.validate().map_err(|e| located("variants", format!("variant {i}: {e}")))?;
                let clean = !v.name.is_empty()
                    && v.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
                if !clean || variants[..i].iter().any(|o| o.name == v.name) {
                    return Err(located(
                        "variants",
                        format!("variant names must be unique and use [A-Za-z0-9_-], got {:?}", v.name),
                    ));
                }
            }
            if !matches!(c.environment, EnvConfig::Electricity { .. }) {
                return Err(located("environment", "electricity_eval runs on the electricity environment".into()));
            }
        }
        TrainPg | TrainSpsa => {}
    }
    Ok(())
}

/// Checks that need the built environment: finiteness and policy shape.
fn check_against_env(x: &Experiment, located: &Locate<'_>) -> Result<(), CliError> {
    use ExperimentKind::*;
    let c = &x.config;
    let finite_only = matches!(c.kind, OracleVerify | BatchBiasStudy | MarkovVsNonmarkov);
    if finite_only && x.env.finite().is_none() {
        return Err(located(
            "environment",
            format!("{} needs a finite environment", c.kind.name()),
        ));
    }
    if let (OracleVerify, Some(mdp)) = (c.kind, x.env.finite()) {
        let o = c.oracle.clone().unwrap_or_default();
        cptrl_core::oracle::two_action_mix(mdp, o.decision_state, o.actions, &o.edges, &vec![0.5; o.edges.len() + 1])
            .map_err(|e| located("oracle", e.to_string()))?;
        return Ok(());
    }
    if let (BatchBiasStudy, Some(mdp)) = (c.kind, x.env.finite()) {
        let b = c.bias.clone().unwrap_or_default();
        if b.state >= mdp.n_states() || b.action >= mdp.n_actions() {
            return Err(located("bias", "state or action out of range".into()));
        }
        if !matches!(c.policy.model, ModelConfig::Softmax | ModelConfig::SoftmaxTanh { .. }) {
            return Err(located("model", "batch bias study needs a tabular policy".into()));
        }
    }
    if c.kind == MarkovVsNonmarkov && matches!(c.policy.model, ModelConfig::GaussianMlp { .. }) {
        return Err(located("model", "markov_vs_nonmarkov needs a tabular policy".into()));
    }
    let abstraction = build_abstraction(&c.policy.abstraction, &x.env).map_err(|e| located("abstraction", e.to_string()))?;
    let policy = x.initial_policy(abstraction, 0).map_err(|e| located("policy", e.to_string()))?;
    policy
        .check_compatible(x.env.env().observation_space(), x.env.env().action_space())
        .map_err(|e| located("policy", e.to_string()))?;
    Ok(())
}

fn env_label(e: &EnvConfig) -> String {
    match e {
        EnvConfig::TwoStateCounterexample => "two_state_counterexample".into(),
        EnvConfig::ExpCounterexample => "exp_counterexample".into(),
        EnvConfig::MarkovTestEnv => "markov_test_env".into(),
        EnvConfig::UtilityGrid => "utility_grid".into(),
        EnvConfig::ScalingGrid { n, .. } => format!("scaling_grid_{n}"),
        EnvConfig::TrafficGrid { n } => format!("traffic_grid_{n}"),
        EnvConfig::Electricity { .. } => "electricity".into(),
    }
}

fn build_env(e: &EnvConfig, base: &Path) -> cptrl_core::Result<EnvHandle> {
    Ok(match e {
        EnvConfig::TwoStateCounterexample => EnvHandle::Finite(two_state_counterexample()),
        EnvConfig::ExpCounterexample => EnvHandle::Finite(exp_counterexample()),
        EnvConfig::MarkovTestEnv => EnvHandle::Finite(markov_test_env()),
        EnvConfig::UtilityGrid => EnvHandle::Finite(utility_grid_env()),
        EnvConfig::ScalingGrid { n, horizon } => {
            EnvHandle::Finite(scaling_grid_env_with_horizon(*n, horizon.unwrap_or(3 * n))?)
        }
        EnvConfig::TrafficGrid { n } => EnvHandle::Finite(traffic_grid_env(*n)?),
        EnvConfig::Electricity { prices, params } => {
            let series = match prices {
                Some(p) => ingest_prices(&base.join(p))?,
                None => PriceSeries::synthetic(),
            };
            EnvHandle::Electricity(ElectricityEnv::new(series, params.clone())?)
        }
    })
}

fn build_abstraction(a: &AbstractionConfig, env: &EnvHandle) -> cptrl_core::Result<HistoryAbstraction> {
    let horizon = env.env().horizon();
    match a {
        AbstractionConfig::Stationary => Ok(HistoryAbstraction::Stationary),
        AbstractionConfig::Markov => Ok(HistoryAbstraction::Markov { horizon }),
        AbstractionConfig::SumAugmented { edges } => HistoryAbstraction::sum_augmented(horizon, edges.clone()),
        AbstractionConfig::FullHistory => match env.finite() {
            Some(mdp) => Ok(HistoryAbstraction::FullHistory {
                index: HistoryIndex::build(mdp)?,
            }),
            None => Err(cptrl_core::Error::Unsupported(
                "full-history policies need a finite environment".into(),
            )),
        },
    }
}

fn build_policy(
    model: &ModelConfig,
    abstraction: HistoryAbstraction,
    env: &EnvHandle,
    seed: u64,
) -> cptrl_core::Result<PolicyParams> {
    let e = env.env();
    let discrete = |space: Space, what: &str| match space {
        Space::Discrete(n) => Ok(n),
        Space::Continuous(_) => Err(cptrl_core::Error::Configuration(format!(
            "tabular policies need a discrete {what} space"
        ))),
    };
    match model {
        ModelConfig::Softmax => PolicyParams::softmax(
            abstraction,
            discrete(e.observation_space(), "observation")?,
            discrete(e.action_space(), "action")?,
        ),
        ModelConfig::SoftmaxTanh { temperature } => PolicyParams::softmax_tanh(
            abstraction,
            discrete(e.observation_space(), "observation")?,
            discrete(e.action_space(), "action")?,
            *temperature,
        ),
        ModelConfig::GaussianMlp { hidden, input_scale } => {
            let dim = |space: Space| match space {
                Space::Continuous(d) => d,
                Space::Discrete(_) => 1,
            };
            let scale = match (input_scale, env) {
                (Some(s), _) => Some(s.clone()),
                (None, EnvHandle::Electricity(elec)) => {
                    let mut s = elec.observation_scale();
                    match &abstraction {
                        HistoryAbstraction::Markov { .. } => s.push(1.0 / SLOTS as f64),
                        HistoryAbstraction::SumAugmented { .. } => {
                            s.push(1.0 / elec.r_max());
                            s.push(1.0 / SLOTS as f64);
                        }
                        _ => {}
                    }
                    Some(s)
                }
                (None, EnvHandle::Finite(_)) => None,
            };
            let mut rng = seeded(derive_seed(&[seed, MLP_INIT_STREAM]));
            PolicyParams::gaussian_mlp(
                abstraction,
                dim(e.observation_space()),
                dim(e.action_space()),
                hidden,
                scale,
                &mut rng,
            )
        }
    }
}

/// Reads a price CSV with header `slot,price` and one row per slot, in order.
pub fn ingest_prices(path: &Path) -> cptrl_core::Result<PriceSeries> {
    use cptrl_core::Error::Ingestion;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Ingestion(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Ingestion(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["slot", "price"] {
        return Err(Ingestion(format!(
            "{}: header must be `slot,price`, got `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut prices = Vec::with_capacity(SLOTS);
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Ingestion(format!("{}:{line}: {e}", path.display())))?;
        let slot: usize = record[0]
            .parse()
            .map_err(|_| Ingestion(format!("{}:{line}: slot `{}` is not an integer", path.display(), &record[0])))?;
        if slot != i {
            return Err(Ingestion(format!("{}:{line}: expected slot {i}, got {slot}", path.display())));
        }
        let price: f64 = record[1]
            .parse()
            .map_err(|_| Ingestion(format!("{}:{line}: price `{}` is not a number", path.display(), &record[1])))?;
        prices.push(price);
    }
    PriceSeries::new(prices).map_err(|e| match e {
        Ingestion(msg) => Ingestion(format!("{}: {msg}", path.display())),
        other => other,
    })
}

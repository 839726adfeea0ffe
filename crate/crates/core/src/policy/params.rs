use rand::Rng;
use serde::{Deserialize, Serialize};

use super::history::HistoryAbstraction;
use super::mlp::{self, GaussianMlp};
use super::{ActionDist, DiscretePolicy, Feature, HistoryView, RolloutPolicy};
use crate::env::{Action, Space, Trajectory};
use crate::error::{Error, Result};
use crate::rng::SimRng;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Row-major logits, one row per abstraction cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    SoftmaxTabular { table: LogitTable },
    /// Softmax over `α·tanh(θ/α)`: logits bounded by the temperature `α`.
    SoftmaxTanh { table: LogitTable, temperature: f64 },
    GaussianMlp { net: GaussianMlp },
}

/// A differentiable policy: parameter vector plus the history abstraction it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub abstraction: HistoryAbstraction,
    pub kind: PolicyKind,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl PolicyParams {
    /// All-zero logits: the uniform policy.
    pub fn softmax(abstraction: HistoryAbstraction, n_states: usize, n_actions: usize) -> Result<Self> {
        abstraction.validate()?;
        let rows = abstraction.rows(n_states);
        let p = PolicyParams {
            abstraction,
            kind: PolicyKind::SoftmaxTabular {
                table: LogitTable {
                    n_states,
                    n_actions,
                    logits: vec![0.0; rows * n_actions],
                },
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn softmax_tanh(abstraction: HistoryAbstraction, n_states: usize, n_actions: usize, temperature: f64) -> Result<Self> {
        let mut p = Self::softmax(abstraction, n_states, n_actions)?;
        let PolicyKind::SoftmaxTabular { table } = p.kind else { unreachable!() };
        p.kind = PolicyKind::SoftmaxTanh { table, temperature };
        p.validate()?;
        Ok(p)
    }

    /// Gaussian policy whose mean is an MLP of the features selected by the
    /// abstraction (`state`, plus `t` for Markov, plus partial return and `t`
    /// for sum-augmented).
    pub fn gaussian_mlp(
        abstraction: HistoryAbstraction,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        input_scale: Option<Vec<f64>>,
        rng: &mut SimRng,
    ) -> Result<Self> {
        abstraction.validate()?;
        let input_dim = state_dim
            + match abstraction {
                HistoryAbstraction::Stationary => 0,
                HistoryAbstraction::Markov { .. } => 1,
                HistoryAbstraction::SumAugmented { .. } => 2,
                HistoryAbstraction::FullHistory { .. } => {
                    return Err(Error::unsupported("full-history abstraction is tabular only"))
                }
            };
        let scale = input_scale.unwrap_or_else(|| vec![1.0; input_dim]);
        let net = GaussianMlp::new(input_dim, hidden, action_dim, scale, rng)?;
        Ok(PolicyParams {
            abstraction,
            kind: PolicyKind::GaussianMlp { net },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.abstraction.validate()?;
        match &self.kind {
            PolicyKind::SoftmaxTabular { table } | PolicyKind::SoftmaxTanh { table, .. } => {
                let rows = self.abstraction.rows(table.n_states);
                if table.n_actions == 0 || table.logits.len() != rows * table.n_actions {
                    return Err(Error::validation(format!(
                        "logit table has {} entries, expected {rows} rows x {} actions",
                        table.logits.len(),
                        table.n_actions
                    )));
                }
                if let PolicyKind::SoftmaxTanh { temperature, .. } = &self.kind {
                    if !(*temperature > 0.0 && temperature.is_finite()) {
                        return Err(Error::validation("tanh temperature must be positive"));
                    }
                }
                Ok(())
            }
            PolicyKind::GaussianMlp { net } => {
                if matches!(self.abstraction, HistoryAbstraction::FullHistory { .. }) {
                    return Err(Error::validation("full-history abstraction is tabular only"));
                }
                net.validate()
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: PolicyParams = serde_json::from_str(s).map_err(|e| Error::config(format!("policy checkpoint: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy parameters serialize")
    }

    pub fn params(&self) -> &[f64] {
        match &self.kind {
            PolicyKind::SoftmaxTabular { table } | PolicyKind::SoftmaxTanh { table, .. } => &table.logits,
            PolicyKind::GaussianMlp { net } => &net.theta,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.kind {
            PolicyKind::SoftmaxTabular { table } | PolicyKind::SoftmaxTanh { table, .. } => &mut table.logits,
            PolicyKind::GaussianMlp { net } => &mut net.theta,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.kind, PolicyKind::GaussianMlp { .. })
    }

    pub fn temperature(&self) -> Option<f64> {
        match self.kind {
            PolicyKind::SoftmaxTanh { temperature, .. } => Some(temperature),
            _ => None,
        }
    }

    pub fn set_temperature(&mut self, alpha: f64) -> Result<()> {
        match &mut self.kind {
            PolicyKind::SoftmaxTanh { temperature, .. } if alpha > 0.0 && alpha.is_finite() => {
                *temperature = alpha;
                Ok(())
            }
            PolicyKind::SoftmaxTanh { .. } => Err(Error::argument("temperature must be positive")),
            _ => Err(Error::unsupported("only softmax_tanh policies have a temperature")),
        }
    }

    /// Policy input for a history: a table row or an MLP feature vector.
    pub fn feature(&self, view: &HistoryView<'_>) -> Result<Feature> {
        match &self.kind {
            PolicyKind::SoftmaxTabular { table } | PolicyKind::SoftmaxTanh { table, .. } => {
                Ok(Feature::Row(self.abstraction.row(table.n_states, view)?))
            }
            PolicyKind::GaussianMlp { .. } => {
                let crate::env::EnvState::Continuous(state) = view.state else {
                    return Err(Error::config("Gaussian MLP policy needs a continuous state"));
                };
                let mut x = state.clone();
                match self.abstraction {
                    HistoryAbstraction::Markov { .. } => x.push(view.t as f64),
                    HistoryAbstraction::SumAugmented { .. } => x.extend([view.partial_return, view.t as f64]),
                    _ => {}
                }
                Ok(Feature::Vector(x))
            }
        }
    }

    fn row_slice<'a>(table: &'a LogitTable, feature: &Feature) -> Result<(usize, &'a [f64])> {
        let Feature::Row(r) = *feature else {
            return Err(Error::config("tabular policy needs a row feature"));
        };
        let a = table.n_actions;
        table
            .logits
            .get(r * a..(r + 1) * a)
            .map(|s| (r, s))
            .ok_or_else(|| Error::config(format!("row {r} outside the logit table")))
    }

    fn effective_logits(&self, feature: &Feature) -> Result<(usize, Vec<f64>)> {
        match &self.kind {
            PolicyKind::SoftmaxTabular { table } => {
                let (r, theta) = Self::row_slice(table, feature)?;
                Ok((r, theta.to_vec()))
            }
            PolicyKind::SoftmaxTanh { table, temperature } => {
                let (r, theta) = Self::row_slice(table, feature)?;
                Ok((r, theta.iter().map(|t| temperature * (t / temperature).tanh()).collect()))
            }
            PolicyKind::GaussianMlp { .. } => Err(Error::unsupported("Gaussian policies have no logits")),
        }
    }

    /// `∂z_b/∂θ_b` for the effective logits of one row.
    fn logit_slope(&self, theta: f64) -> f64 {
        match self.kind {
            PolicyKind::SoftmaxTanh { temperature, .. } => {
                let th = (theta / temperature).tanh();
                1.0 - th * th
            }
            _ => 1.0,
        }
    }

    fn table(&self) -> Option<&LogitTable> {
        match &self.kind {
            PolicyKind::SoftmaxTabular { table } | PolicyKind::SoftmaxTanh { table, .. } => Some(table),
            PolicyKind::GaussianMlp { .. } => None,
        }
    }

    pub fn action_distribution(&self, feature: &Feature) -> Result<ActionDist> {
        match &self.kind {
            PolicyKind::GaussianMlp { net } => {
                let Feature::Vector(x) = feature else {
                    return Err(Error::config("Gaussian MLP policy needs a vector feature"));
                };
                let mean = net.mean(x)?;
                let std = net.log_std().iter().map(|l| l.exp()).collect();
                Ok(ActionDist::Gaussian { mean, std })
            }
            _ => Ok(ActionDist::Discrete(softmax(&self.effective_logits(feature)?.1))),
        }
    }

    pub fn sample_action(&self, feature: &Feature, rng: &mut SimRng) -> Result<Action> {
        self.action_distribution(feature)?.sample(rng)
    }

    pub fn log_prob(&self, feature: &Feature, action: &Action) -> Result<f64> {
        match (self.action_distribution(feature)?, action) {
            (ActionDist::Discrete(p), Action::Discrete(a)) => {
                let pa = *p.get(*a).ok_or_else(|| Error::config(format!("action {a} out of range")))?;
                Ok(pa.ln())
            }
            (ActionDist::Gaussian { mean, std }, Action::Continuous(a)) if a.len() == mean.len() => Ok(mean
                .iter()
                .zip(&std)
                .zip(a)
                .map(|((m, s), x)| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * LOG_2PI)
                .sum()),
            _ => Err(Error::config("action does not match the policy's action space")),
        }
    }

    /// Adds `scale · ∇_θ log π(action | feature)` into `out`.
    pub fn accumulate_score(&self, feature: &Feature, action: &Action, scale: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.n_params() {
            return Err(Error::argument("gradient buffer has the wrong length"));
        }
        match (&self.kind, action) {
            (PolicyKind::GaussianMlp { net }, Action::Continuous(a)) => {
                let Feature::Vector(x) = feature else {
                    return Err(Error::config("Gaussian MLP policy needs a vector feature"));
                };
                if a.len() != net.output_dim() {
                    return Err(Error::config("action dimension does not match the policy"));
                }
                let fwd = net.forward(x)?;
                let mean = mlp::output(&fwd);
                let log_std = net.log_std();
                let d = net.output_dim();
                let base = out.len() - d;
                let mut grad_mean = vec![0.0; d];
                for i in 0..d {
                    let var = (2.0 * log_std[i]).exp();
                    let diff = a[i] - mean[i];
                    grad_mean[i] = diff / var;
                    out[base + i] += scale * (diff * diff / var - 1.0);
                }
                net.backprop_mean(&fwd, &grad_mean, scale, out);
                Ok(())
            }
            (PolicyKind::GaussianMlp { .. }, _) => Err(Error::config("Gaussian policy needs a continuous action")),
            (_, Action::Discrete(a)) => {
                let table = self.table().expect("tabular kind");
                let (row, theta) = Self::row_slice(table, feature)?;
                let probs = softmax(&self.effective_logits(feature)?.1);
                let pa = *probs.get(*a).ok_or_else(|| Error::config(format!("action {a} out of range")))?;
                if pa <= 0.0 {
                    return Err(Error::argument(format!("action {a} has zero probability")));
                }
                let n = table.n_actions;
                for b in 0..n {
                    let ind = if b == *a { 1.0 } else { 0.0 };
                    out[row * n + b] += scale * (ind - probs[b]) * self.logit_slope(theta[b]);
                }
                Ok(())
            }
            _ => Err(Error::config("tabular policy needs a discrete action")),
        }
    }

    pub fn score_gradient(&self, feature: &Feature, action: &Action) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.n_params()];
        self.accumulate_score(feature, action, 1.0, &mut g)?;
        Ok(g)
    }

    /// Shannon entropy of the action distribution and its gradient.
    pub fn entropy_and_gradient(&self, feature: &Feature) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.n_params()];
        let h = self.accumulate_entropy_gradient(feature, 1.0, &mut g)?;
        Ok((h, g))
    }

    /// Adds `scale · ∇_θ H(π(·|feature))` into `out` and returns `H`.
    pub fn accumulate_entropy_gradient(&self, feature: &Feature, scale: f64, out: &mut [f64]) -> Result<f64> {
        let Some(table) = self.table() else {
            return Err(Error::unsupported("entropy regularization needs a discrete policy"));
        };
        let (row, theta) = Self::row_slice(table, feature)?;
        let probs = softmax(&self.effective_logits(feature)?.1);
        let plogp = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
        let h = -probs.iter().map(|&p| plogp(p)).sum::<f64>();
        let n = table.n_actions;
        for b in 0..n {
            let p = probs[b];
            let dz = if p > 0.0 { -p * (p.ln() + h) } else { 0.0 };
            out[row * n + b] += scale * dz * self.logit_slope(theta[b]);
        }
        Ok(h)
    }

    /// Replays a trajectory and calls `visit(feature, action)` at each step.
    pub fn for_each_decision(
        &self,
        traj: &Trajectory,
        discount: f64,
        mut visit: impl FnMut(&Feature, &Action) -> Result<()>,
    ) -> Result<()> {
        let mut partial = 0.0;
        let mut factor = 1.0;
        for (t, step) in traj.steps.iter().enumerate() {
            let view = HistoryView {
                t,
                state: &step.state,
                partial_return: partial,
                past: &traj.steps[..t],
            };
            let f = self.feature(&view)?;
            visit(&f, &step.action)?;
            partial += factor * step.reward;
            factor *= discount;
        }
        Ok(())
    }

    /// `Σ_t ∇_θ log π(a_t | h_t)` along a trajectory.
    pub fn trajectory_score(&self, traj: &Trajectory, discount: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.n_params()];
        self.for_each_decision(traj, discount, |f, a| self.accumulate_score(f, a, 1.0, &mut g))?;
        Ok(g)
    }
}

/// Deploys a policy greedily: always plays the mode of its action law.
#[derive(Debug, Clone, Copy)]
pub struct ModeAction<'a>(pub &'a PolicyParams);

impl RolloutPolicy for ModeAction<'_> {
    fn act(&self, view: &HistoryView<'_>, _rng: &mut SimRng) -> Result<Action> {
        Ok(self.0.action_distribution(&self.0.feature(view)?)?.mode())
    }

    fn check_compatible(&self, observation: Space, action: Space) -> Result<()> {
        self.0.check_compatible(observation, action)
    }
}

impl RolloutPolicy for PolicyParams {
    fn act(&self, view: &HistoryView<'_>, rng: &mut SimRng) -> Result<Action> {
        let f = self.feature(view)?;
        self.sample_action(&f, rng)
    }

    fn check_compatible(&self, observation: Space, action: Space) -> Result<()> {
        match (&self.kind, observation, action) {
            (PolicyKind::GaussianMlp { net }, Space::Continuous(obs), Space::Continuous(act)) => {
                let extra = net.input_dim() as isize - obs as isize;
                let want = match self.abstraction {
                    HistoryAbstraction::Markov { .. } => 1,
                    HistoryAbstraction::SumAugmented { .. } => 2,
                    _ => 0,
                };
                if extra == want && act == net.output_dim() {
                    return Ok(());
                }
            }
            (PolicyKind::SoftmaxTabular { table } | PolicyKind::SoftmaxTanh { table, .. }, Space::Discrete(s), Space::Discrete(a))
                if s == table.n_states && a == table.n_actions =>
            {
                return Ok(())
            }
            _ => {}
        }
        Err(Error::config(format!(
            "policy is incompatible with observation space {observation:?} and action space {action:?}"
        )))
    }
}

impl DiscretePolicy for PolicyParams {
    fn action_probs(&self, view: &HistoryView<'_>) -> Result<Vec<f64>> {
        match self.action_distribution(&self.feature(view)?)? {
            ActionDist::Discrete(p) => Ok(p),
            ActionDist::Gaussian { .. } => Err(Error::unsupported("continuous policy has no action table")),
        }
    }

    fn is_sum_markov(&self) -> bool {
        self.abstraction.is_sum_markov()
    }
}

/// Uniform random logits in `[-scale, scale]`; used to draw test policies.
pub fn randomize(params: &mut PolicyParams, scale: f64, rng: &mut SimRng) {
    for v in params.params_mut() {
        *v = rng.random_range(-scale..=scale);
    }
}

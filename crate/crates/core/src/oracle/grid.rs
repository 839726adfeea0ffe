use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::enumerate::exact_cpt;
use crate::cpt::CptSpec;
use crate::env::{Environment, FiniteMdp};
use crate::error::{Error, Result};
use crate::policy::{DiscretePolicy, HistoryAbstraction, ProbabilityTable};

pub const MAX_GRID_AXES: usize = 3;

/// Free probability parameters, each swept over `i / (resolution − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGridSpec {
    pub resolutions: Vec<usize>,
}

impl PolicyGridSpec {
    pub fn uniform(axes: usize, resolution: usize) -> Self {
        PolicyGridSpec {
            resolutions: vec![resolution; axes],
        }
    }

    /// Axes with the given spacing, e.g. `0.01` gives 101 points per axis.
    pub fn with_step(axes: usize, step: f64) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::argument(format!("grid step must lie in (0, 1], got {step}")));
        }
        let intervals = (1.0 / step).round();
        if ((1.0 / step) - intervals).abs() > 1e-9 {
            return Err(Error::argument(format!("grid step {step} does not divide [0, 1]")));
        }
        Ok(Self::uniform(axes, intervals as usize + 1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.len() > MAX_GRID_AXES {
            return Err(Error::Resource {
                what: "policy grid axes".into(),
                count: self.resolutions.len(),
                cap: MAX_GRID_AXES,
            });
        }
        if self.resolutions.is_empty() || self.resolutions.iter().any(|&r| r < 2) {
            return Err(Error::validation("policy grid needs at least one axis, each with resolution >= 2"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolutions.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point number `flat`, the first axis varying slowest.
    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.resolutions.len()];
        for (axis, &res) in self.resolutions.iter().enumerate().rev() {
            p[axis] = (flat % res) as f64 / (res - 1) as f64;
            flat /= res;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    /// Every grid point with its exact CPT value, in lexicographic order.
    pub table: Vec<(Vec<f64>, f64)>,
}

impl GridSearchResult {
    pub fn to_csv(&self) -> String {
        let dims = self.best_params.len();
        let mut out = String::new();
        for i in 0..dims {
            let _ = write!(out, "p{i},");
        }
        out.push_str("cpt_value\n");
        for (p, v) in &self.table {
            for x in p {
                let _ = write!(out, "{x},");
            }
            let _ = writeln!(out, "{v}");
        }
        out
    }
}

/// Exact CPT value at every grid point, evaluated in parallel. The best
/// point wins by more than `1e−12`; otherwise the lexicographically
/// smaller point is kept.
pub fn grid_search_policy<P, F>(mdp: &FiniteMdp, spec: &CptSpec, grid: &PolicyGridSpec, build: F) -> Result<GridSearchResult>
where
    P: DiscretePolicy,
    F: Fn(&[f64]) -> Result<P> + Sync,
{
    grid.validate()?;
    spec.validate()?;
    let table: Vec<(Vec<f64>, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let policy = build(&p)?;
            let v = exact_cpt(mdp, &policy, spec)?;
            Ok((p, v))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, (_, v)) in table.iter().enumerate() {
        if *v > table[best].1 + 1e-12 {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best_params: table[best].0.clone(),
        best_value: table[best].1,
        table,
    })
}

/// Policy that mixes two actions in `decision_state`: action `second` gets
/// probability `p[k]` when the partial return falls in bin `k` of `edges`,
/// action `first` the rest. Other states act uniformly.
pub fn two_action_mix(
    mdp: &FiniteMdp,
    decision_state: usize,
    (first, second): (usize, usize),
    edges: &[f64],
    p: &[f64],
) -> Result<ProbabilityTable> {
    if p.len() != edges.len() + 1 {
        return Err(Error::argument(format!(
            "{} bins need {} probabilities, got {}",
            edges.len() + 1,
            edges.len() + 1,
            p.len()
        )));
    }
    let na = mdp.n_actions();
    let ns = mdp.n_states();
    if first >= na || second >= na || first == second || decision_state >= ns {
        return Err(Error::argument("mixed actions must be two distinct valid actions"));
    }
    let abstraction = if edges.is_empty() {
        HistoryAbstraction::Markov { horizon: mdp.horizon() }
    } else {
        HistoryAbstraction::sum_augmented(mdp.horizon(), edges.to_vec())?
    };
    let mut table = ProbabilityTable::uniform(abstraction, ns, na)?;
    let bins = edges.len() + 1;
    for t in 0..mdp.horizon() {
        for (k, &pk) in p.iter().enumerate() {
            let mut row = vec![0.0; na];
            row[first] = 1.0 - pk;
            row[second] = pk;
            table.set_row((t * bins + k) * ns + decision_state, &row)?;
        }
    }
    Ok(table)
}

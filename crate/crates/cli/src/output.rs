//! Collects result files in memory, checks their schemas and writes them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cptrl_core::pg::TrainResult;
use cptrl_core::study::median;
use serde_json::Value;

use crate::error::CliError;

pub const CURVE_HEADER: &str = "iter,cpt_estimate,grad_norm";
pub const BUDGET_HEADER: &str = "iter,trajectories,cpt_estimate,grad_norm";
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count,frequency";
pub const BATCH_BIAS_HEADER: &str = "batch,median_p,q25,q75";

/// Files produced by one experiment, keyed by path relative to the output
/// directory.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<PathBuf, String>,
}

impl Outputs {
    pub fn add(&mut self, rel: impl Into<PathBuf>, content: String) {
        self.files.insert(rel.into(), content);
    }

    pub fn add_json(&mut self, rel: impl Into<PathBuf>, value: &Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
        self.add(rel, text + "\n");
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.files.keys()
    }

    /// Checks every CSV against its schema, then writes all files.
    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        for (rel, content) in &self.files {
            if rel.extension().is_some_and(|e| e == "csv") {
                check_csv(rel, content)?;
            }
        }
        for (rel, content) in &self.files {
            let path = out_dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)
                    .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
            }
            fs::write(&path, content).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Expected header for a known file name, if the name has a fixed schema.
fn expected_header(rel: &Path) -> Option<&'static str> {
    let name = rel.file_name()?.to_str()?;
    match name {
        "curve.csv" => Some(CURVE_HEADER),
        "budget.csv" => Some(BUDGET_HEADER),
        "histogram.csv" => Some(HISTOGRAM_HEADER),
        "batch_bias.csv" => Some(BATCH_BIAS_HEADER),
        _ if name.starts_with("curve_seed_") => Some(CURVE_HEADER),
        _ => None,
    }
}

/// Rectangular, numeric, with the expected header when the name fixes one.
fn check_csv(rel: &Path, content: &str) -> Result<(), CliError> {
    let bad = |msg: String| CliError::Runtime(format!("{}: {msg}", rel.display()));
    let mut reader = csv::ReaderBuilder::new().from_reader(content.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if let Some(want) = expected_header(rel) {
        let got = header.iter().collect::<Vec<_>>().join(",");
        if got != want {
            return Err(bad(format!("header `{got}` does not match `{want}`")));
        }
    }
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("row {}: `{field}` is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(bad(format!("row {}: non-finite value", i + 1)));
            }
        }
    }
    Ok(())
}

/// JSON number, refusing NaN and infinities.
pub fn num(x: f64, what: &str) -> Result<Value, CliError> {
    if x.is_finite() {
        Ok(Value::from(x))
    } else {
        Err(CliError::Runtime(format!("{what} is not finite ({x})")))
    }
}

pub fn opt_num(x: Option<f64>, what: &str) -> Result<Value, CliError> {
    x.map_or(Ok(Value::Null), |v| num(v, what))
}

pub fn nums(xs: &[f64], what: &str) -> Result<Value, CliError> {
    xs.iter().map(|&x| num(x, what)).collect::<Result<Vec<_>, _>>().map(Value::Array)
}

/// Per-iteration medians across runs, `iter,cpt_estimate,grad_norm`.
pub fn median_curve(runs: &[&TrainResult]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    let iterations = runs.iter().map(|r| r.cpt_estimates.len()).min().unwrap_or(0);
    for k in 0..iterations {
        let cpt: Vec<f64> = runs.iter().map(|r| r.cpt_estimates[k]).collect();
        let grad: Vec<f64> = runs.iter().map(|r| r.grad_norms[k]).collect();
        out.push_str(&format!("{k},{},{}\n", median(&cpt), median(&grad)));
    }
    out
}

/// Per-iteration medians with the cumulative trajectory count, which is the
/// same for every run of one configuration.
pub fn median_budget_curve(runs: &[&TrainResult]) -> String {
    let mut out = format!("{BUDGET_HEADER}\n");
    let iterations = runs.iter().map(|r| r.cpt_estimates.len()).min().unwrap_or(0);
    for k in 0..iterations {
        let cpt: Vec<f64> = runs.iter().map(|r| r.cpt_estimates[k]).collect();
        let grad: Vec<f64> = runs.iter().map(|r| r.grad_norms[k]).collect();
        out.push_str(&format!("{k},{},{},{}\n", runs[0].trajectory_counts[k], median(&cpt), median(&grad)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_checks() {
        assert!(check_csv(Path::new("curve.csv"), "iter,cpt_estimate,grad_norm\n0,1.5,2\n").is_ok());
        assert!(check_csv(Path::new("curve.csv"), "iter,cpt,grad_norm\n0,1.5,2\n").is_err());
        assert!(check_csv(Path::new("curve.csv"), "iter,cpt_estimate,grad_norm\n0,NaN,2\n").is_err());
        assert!(check_csv(Path::new("curve.csv"), "iter,cpt_estimate,grad_norm\n0,1\n").is_err());
        assert!(check_csv(Path::new("grid.csv"), "p0,cpt_value\n0.5,1\n").is_ok());
    }

    #[test]
    fn non_finite_numbers_are_refused() {
        assert!(num(f64::NAN, "x").is_err());
        assert_eq!(num(0.25, "x").unwrap(), Value::from(0.25));
        assert_eq!(opt_num(None, "x").unwrap(), Value::Null);
    }
}

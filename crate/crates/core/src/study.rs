//! Summaries shared by experiment drivers: medians, batch-size bias tables
//! and log-log slope fits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pg::quantile;

pub const MIN_BATCH_SIZES: usize = 2;
pub const MIN_RUNS_PER_BATCH: usize = 20;

/// Median of the values (NaN for an empty slice).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile(&sorted, 0.5)
}

/// One row of the batch-size bias table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchBiasRow {
    pub batch: usize,
    pub median_p: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Median and interquartile range of the learned probability per batch size.
///
/// `results` pairs each batch size with the learned probabilities of its
/// runs; rows come out sorted by batch size.
pub fn report_batch_bias(results: &[(usize, Vec<f64>)]) -> Result<Vec<BatchBiasRow>> {
    if results.len() < MIN_BATCH_SIZES {
        return Err(Error::argument(format!(
            "batch bias report needs at least {MIN_BATCH_SIZES} batch sizes, got {}",
            results.len()
        )));
    }
    let mut rows = Vec::with_capacity(results.len());
    for (batch, ps) in results {
        if ps.len() < MIN_RUNS_PER_BATCH {
            return Err(Error::argument(format!(
                "batch size {batch} has {} runs, need at least {MIN_RUNS_PER_BATCH}",
                ps.len()
            )));
        }
        let mut sorted = ps.clone();
        sorted.sort_by(f64::total_cmp);
        rows.push(BatchBiasRow {
            batch: *batch,
            median_p: quantile(&sorted, 0.5),
            q25: quantile(&sorted, 0.25),
            q75: quantile(&sorted, 0.75),
        });
    }
    rows.sort_by_key(|r| r.batch);
    Ok(rows)
}

pub fn batch_bias_csv(rows: &[BatchBiasRow]) -> String {
    let mut out = String::from("batch,median_p,q25,q75\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.batch, r.median_p, r.q25, r.q75);
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`. Needs two distinct positive
/// abscissae and positive ordinates.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::argument("slope fit needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::argument("log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::argument("slope fit needs distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Slope of `|median_p − target|` against batch size on log-log axes.
pub fn bias_slope(rows: &[BatchBiasRow], target: f64) -> Result<f64> {
    let xs: Vec<f64> = rows.iter().map(|r| r.batch as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (r.median_p - target).abs()).collect();
    log_log_slope(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(log_log_slope(&[1.0, 2.0], &[0.0, 2.0]).is_err());
    }

    #[test]
    fn batch_bias_rows() {
        let runs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let rows = report_batch_bias(&[(1000, runs.clone()), (10, runs)]).unwrap();
        assert_eq!(rows[0].batch, 10);
        assert_eq!(rows[0].median_p, 0.5);
        assert_eq!(rows[0].q25, 0.25);
        assert_eq!(rows[0].q75, 0.75);
        assert!(batch_bias_csv(&rows).starts_with("batch,median_p,q25,q75\n10,0.5,0.25,0.75\n"));
    }

    #[test]
    fn batch_bias_preconditions() {
        assert!(report_batch_bias(&[(10, vec![0.2; 20])]).is_err());
        assert!(report_batch_bias(&[(10, vec![0.2; 20]), (20, vec![0.2; 5])]).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

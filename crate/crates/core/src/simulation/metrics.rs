//! Bias, RMSE and RMSE reduction across Monte Carlo replications.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::kahan_sum;

use super::montecarlo::Parameter;

/// Truth values this close to zero make the relative bias undefined.
pub const ZERO_TRUTH_TOL: f64 = 1e-12;

/// `100 * mean(est - truth) / truth`, or `None` when the truth is zero.
pub fn bias_pct(estimates: &[f64], truth: f64) -> Option<f64> {
    (truth.abs() > ZERO_TRUTH_TOL).then(|| 100.0 * mean_error(estimates, truth) / truth)
}

pub fn mean_error(estimates: &[f64], truth: f64) -> f64 {
    kahan_sum(estimates.iter().map(|e| e - truth)) / estimates.len() as f64
}

pub fn rmse(estimates: &[f64], truth: f64) -> f64 {
    (kahan_sum(estimates.iter().map(|e| (e - truth) * (e - truth))) / estimates.len() as f64).sqrt()
}

/// `100 * (1 - rmse_adjusted / rmse_simple)`.
pub fn rmse_reduction(rmse_adjusted: f64, rmse_simple: f64) -> f64 {
    100.0 * (1.0 - rmse_adjusted / rmse_simple)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimator: String,
    /// Quantile level: of the pooled outcome for DTE thresholds, or the QTE level.
    pub quantile: f64,
    /// DTE threshold; absent for QTE rows.
    pub threshold: Option<f64>,
    pub truth: f64,
    /// Relative bias in percent; absent when the truth is zero.
    pub bias_pct: Option<f64>,
    pub bias_abs: f64,
    pub zero_truth: bool,
    pub rmse: f64,
    /// Relative to the simple estimator; absent when it was not run.
    pub rmse_reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub parameter: Parameter,
    pub replications: usize,
    /// Size of the simulated sample the truths come from.
    pub oracle_n: usize,
    pub rows: Vec<MetricsRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsTable {
    pub fn row(&self, estimator: &str, position: usize) -> Option<&MetricsRow> {
        self.rows.iter().filter(|r| r.estimator == estimator).nth(position)
    }

    pub fn rows_for<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a MetricsRow> + 'a {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["estimator", "quantile", "threshold", "truth", "bias_pct", "rmse", "rmse_reduction_pct"])?;
        for r in &self.rows {
            wtr.write_record([
                r.estimator.clone(),
                r.quantile.to_string(),
                opt(r.threshold),
                r.truth.to_string(),
                opt(r.bias_pct),
                r.rmse.to_string(),
                opt(r.rmse_reduction_pct),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

//! Monte Carlo replication loop over the synthetic design.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rayon::prelude::*;
use statrs::distribution::ContinuousCDF;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_curves, bootstrap_se, draw_multipliers, pointwise_band, uniform_band, BandEstimate, DEFAULT_DRAWS};
use crate::crossfit::crossfit_nuisance;
use crate::data::{assign_folds, Dataset, ThresholdGrid};
use crate::effects::{dte, qte, EffectCurve, QuantileGrid};
use crate::error::{Error, Result};
use crate::estimator::{adjusted_cdf, simple_estimate, CdfEstimate};
use crate::learners::{GbtParams, LassoParams, LearnerSpec};
use crate::seed::derive_seed;

use super::dgp::{generate_dgp, oracle_nuisance, oracle_sample, DgpConfig};
use super::metrics::{bias_pct, mean_error, rmse, rmse_reduction, MetricsRow, MetricsTable, ZERO_TRUTH_TOL};

/// Seed stream reserved for the oracle sample.
const ORACLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Simple,
    LinearAdjusted,
    LassoAdjusted,
    GbtAdjusted,
    OracleAdjusted,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simple => "simple",
            Self::LinearAdjusted => "linear-adjusted",
            Self::LassoAdjusted => "lasso-adjusted",
            Self::GbtAdjusted => "gbt-adjusted",
            Self::OracleAdjusted => "oracle-adjusted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Dte,
    Qte,
}

/// Bootstrap bands computed in every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    pub alpha: f64,
    pub b_draws: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            b_draws: DEFAULT_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    pub folds: usize,
    pub parameter: Parameter,
    /// DTE thresholds are these quantiles of the pooled oracle outcome; QTE uses them as levels.
    pub quantile_levels: Vec<f64>,
    /// Spacing of the CDF grid used for QTE inversion.
    pub qte_grid_step: f64,
    /// Extra room, in outcome units, beyond the extreme oracle quantiles.
    pub qte_grid_margin: f64,
    pub oracle_n: usize,
    pub seed: u64,
    pub lasso: LassoParams,
    pub gbt: GbtParams,
    pub bands: Option<BandConfig>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            replications: 200,
            estimators: vec![EstimatorKind::Simple, EstimatorKind::LinearAdjusted, EstimatorKind::LassoAdjusted],
            folds: 5,
            parameter: Parameter::Dte,
            quantile_levels: (1..=9).map(|k| k as f64 / 10.0).collect(),
            qte_grid_step: 0.1,
            qte_grid_margin: 1.0,
            oracle_n: 1_000_000,
            seed: 0,
            lasso: LassoParams::desk_scale(),
            gbt: GbtParams::default(),
            bands: None,
        }
    }
}

fn invalid(name: &str, reason: &str) -> Error {
    Error::InvalidHyperparameter {
        name: name.into(),
        reason: reason.into(),
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.folds < 2 {
            return Err(invalid("folds", "must be at least 2"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("estimators", "must not be empty"));
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return Err(invalid("estimators", "must not repeat"));
        }
        QuantileGrid::new(self.quantile_levels.clone()).map_err(|_| invalid("quantile_levels", "must be strictly increasing inside (0, 1)"))?;
        if !(self.qte_grid_step > 0.0 && self.qte_grid_step.is_finite()) {
            return Err(invalid("qte_grid_step", "must be positive"));
        }
        if !(self.qte_grid_margin >= 0.0 && self.qte_grid_margin.is_finite()) {
            return Err(invalid("qte_grid_margin", "must be non-negative"));
        }
        if self.oracle_n < 100_000 {
            return Err(invalid("oracle_n", "must be at least 100000"));
        }
        self.lasso.validate()?;
        self.gbt.validate()?;
        if let Some(b) = &self.bands {
            if !(b.alpha > 0.0 && b.alpha < 1.0) {
                return Err(Error::AlphaOutOfRange(b.alpha));
            }
            if b.b_draws < crate::bootstrap::MIN_DRAWS {
                return Err(Error::InsufficientDraws {
                    needed: crate::bootstrap::MIN_DRAWS,
                    got: b.b_draws,
                });
            }
        }
        Ok(())
    }

    fn learner(&self, kind: EstimatorKind) -> Option<LearnerSpec> {
        match kind {
            EstimatorKind::LinearAdjusted => Some(LearnerSpec::linear()),
            EstimatorKind::LassoAdjusted => Some(LearnerSpec::lasso(self.lasso.clone())),
            EstimatorKind::GbtAdjusted => Some(LearnerSpec::gbt(self.gbt.clone())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationBands {
    pub pointwise: BandEstimate<f64>,
    /// Absent when every index point had zero bootstrap spread.
    pub uniform: Option<BandEstimate<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRecord {
    pub kind: EstimatorKind,
    /// Effect estimates at each index point.
    pub effect: Vec<f64>,
    /// CDF estimates, `grid x arm`.
    pub theta: Vec<Vec<f64>>,
    /// Plug-in standard errors (DTE only).
    pub plugin_se: Option<Vec<f64>>,
    pub bands: Option<ReplicationBands>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub data_seed: u64,
    pub records: Vec<EstimatorRecord>,
}

impl Replication {
    pub fn record(&self, kind: EstimatorKind) -> Option<&EstimatorRecord> {
        self.records.iter().find(|r| r.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub dgp: DgpConfig,
    pub mc: MonteCarloConfig,
    /// DTE thresholds or QTE levels.
    pub index: Vec<f64>,
    /// CDF grid the estimators were evaluated on.
    pub grid: Vec<f64>,
    /// Oracle effect at each index point.
    pub truth: Vec<f64>,
    pub replications: Vec<Replication>,
}

/// The evaluation grid, index and truth implied by a configuration.
pub struct Design {
    pub grid: ThresholdGrid<f64>,
    pub index: Vec<f64>,
    pub truth: Vec<f64>,
}

pub fn design(dgp: &DgpConfig, mc: &MonteCarloConfig) -> Result<Design> {
    let oracle = oracle_sample(dgp, mc.oracle_n, derive_seed(mc.seed, &[ORACLE_STREAM]))?;
    let levels = &mc.quantile_levels;
    match mc.parameter {
        Parameter::Dte => {
            let mut thresholds = oracle.observed_quantiles(levels);
            thresholds.dedup();
            if thresholds.len() != levels.len() {
                return Err(invalid("quantile_levels", "map to repeated thresholds"));
            }
            let truth = oracle.dte(&thresholds);
            Ok(Design {
                grid: ThresholdGrid::new(thresholds.clone())?,
                index: thresholds,
                truth,
            })
        }
        Parameter::Qte => {
            let step = mc.qte_grid_step;
            let lo = ((oracle.potential_quantile(false, levels[0]) - mc.qte_grid_margin) / step).floor() as i64;
            let hi = ((oracle.potential_quantile(true, levels[levels.len() - 1]) + mc.qte_grid_margin) / step).ceil() as i64;
            let grid = (lo..=hi).map(|k| k as f64 * step).collect();
            Ok(Design {
                grid: ThresholdGrid::new(grid)?,
                index: levels.clone(),
                truth: oracle.qte(levels),
            })
        }
    }
}

fn estimate_one(kind: EstimatorKind, data: &Dataset<f64>, grid: &ThresholdGrid<f64>, dgp: &DgpConfig, mc: &MonteCarloConfig, r: u64) -> Result<CdfEstimate<f64>> {
    match kind {
        EstimatorKind::Simple => simple_estimate(data, grid),
        EstimatorKind::OracleAdjusted => adjusted_cdf(data, &oracle_nuisance(dgp, data, grid), grid),
        _ => {
            let spec = mc.learner(kind).expect("learner-backed estimator").with_seed(derive_seed(mc.seed, &[r, 2]));
            let folds = assign_folds(data.len(), mc.folds, derive_seed(mc.seed, &[r, 1]))?;
            adjusted_cdf(data, &crossfit_nuisance(data, grid, &folds, &spec)?, grid)
        }
    }
}

fn bands_for(est: &CdfEstimate<f64>, curve: &EffectCurve<f64>, cfg: &BandConfig, seed: u64) -> Result<ReplicationBands> {
    let draws = draw_multipliers::<f64>(est.num_units(), cfg.b_draws, seed);
    let boot = bootstrap_curves(est, curve, &draws)?;
    let se = bootstrap_se(boot.view())?;
    let pointwise = pointwise_band(curve, &se.se, cfg.alpha, Some(cfg.b_draws))?;
    let uniform = match uniform_band(curve, boot.view(), &se, cfg.alpha) {
        Ok(b) => Some(b),
        Err(Error::DegenerateDraws) => None,
        Err(e) => return Err(e),
    };
    Ok(ReplicationBands { pointwise, uniform })
}

fn replicate(dgp: &DgpConfig, mc: &MonteCarloConfig, design: &Design, r: usize) -> Result<Replication> {
    let ru = r as u64;
    let data_seed = derive_seed(mc.seed, &[ru]);
    let data: Dataset<f64> = generate_dgp(&DgpConfig { seed: data_seed, ..dgp.clone() })?;
    let mut records = Vec::with_capacity(mc.estimators.len());
    for &kind in &mc.estimators {
        let est = estimate_one(kind, &data, &design.grid, dgp, mc, ru)?;
        let curve = match mc.parameter {
            Parameter::Dte => dte(&est, 1, 0)?,
            Parameter::Qte => qte(&est, 1, 0, &QuantileGrid::new(design.index.clone())?, true)?,
        };
        let bands = match &mc.bands {
            Some(cfg) => Some(bands_for(&est, &curve, cfg, derive_seed(mc.seed, &[ru, 3]))?),
            None => None,
        };
        records.push(EstimatorRecord {
            kind,
            effect: curve.estimates.clone(),
            theta: est.theta_raw().outer_iter().map(|row| row.to_vec()).collect(),
            plugin_se: curve.se.clone(),
            bands,
        });
    }
    Ok(Replication { index: r, data_seed, records })
}

/// Runs every replication; `progress(done, total)` is called as they finish.
pub fn run_monte_carlo_with(dgp: &DgpConfig, mc: &MonteCarloConfig, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<MonteCarloRun> {
    dgp.validate()?;
    mc.validate()?;
    let design = design(dgp, mc)?;
    let done = AtomicUsize::new(0);
    let replications = (0..mc.replications)
        .into_par_iter()
        .map(|r| {
            let rep = replicate(dgp, mc, &design, r);
            progress(done.fetch_add(1, Ordering::SeqCst) + 1, mc.replications);
            rep
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloRun {
        dgp: dgp.clone(),
        mc: mc.clone(),
        index: design.index,
        grid: design.grid.values().to_vec(),
        truth: design.truth,
        replications,
    })
}

pub fn run_monte_carlo(dgp: &DgpConfig, mc: &MonteCarloConfig) -> Result<MonteCarloRun> {
    run_monte_carlo_with(dgp, mc, &|_, _| {})
}

impl MonteCarloRun {
    /// Effect estimates of one estimator at one index point, over the first `upto` replications.
    pub fn estimates(&self, kind: EstimatorKind, position: usize, upto: usize) -> Vec<f64> {
        self.replications[..upto.min(self.replications.len())]
            .iter()
            .filter_map(|r| r.record(kind).map(|rec| rec.effect[position]))
            .collect()
    }

    /// CDF estimates of one estimator at one grid point and arm.
    pub fn thetas(&self, kind: EstimatorKind, grid_position: usize, arm: usize, upto: usize) -> Vec<f64> {
        self.replications[..upto.min(self.replications.len())]
            .iter()
            .filter_map(|r| r.record(kind).map(|rec| rec.theta[grid_position][arm]))
            .collect()
    }

    /// Metrics over the first `upto` replications (all when `None`).
    pub fn metrics(&self, upto: Option<usize>) -> MetricsTable {
        let upto = upto.unwrap_or(self.replications.len()).min(self.replications.len());
        let has_simple = self.mc.estimators.contains(&EstimatorKind::Simple);
        let mut rows = Vec::new();
        for &kind in &self.mc.estimators {
            for (p, &truth) in self.truth.iter().enumerate() {
                let est = self.estimates(kind, p, upto);
                let e_rmse = rmse(&est, truth);
                let reduction = has_simple.then(|| {
                    if kind == EstimatorKind::Simple {
                        0.0
                    } else {
                        rmse_reduction(e_rmse, rmse(&self.estimates(EstimatorKind::Simple, p, upto), truth))
                    }
                });
                rows.push(MetricsRow {
                    estimator: kind.name().into(),
                    quantile: self.mc.quantile_levels[p],
                    threshold: (self.mc.parameter == Parameter::Dte).then_some(self.index[p]),
                    truth,
                    bias_pct: bias_pct(&est, truth),
                    bias_abs: mean_error(&est, truth),
                    zero_truth: truth.abs() <= ZERO_TRUTH_TOL,
                    rmse: e_rmse,
                    rmse_reduction_pct: reduction,
                });
            }
        }
        MetricsTable {
            parameter: self.mc.parameter,
            replications: upto,
            oracle_n: self.mc.oracle_n,
            rows,
        }
    }

    /// Share of replications whose pointwise band covers the truth at `position`.
    pub fn pointwise_coverage(&self, kind: EstimatorKind, position: usize) -> Option<f64> {
        let hits: Vec<bool> = self
            .replications
            .iter()
            .filter_map(|r| r.record(kind)?.bands.as_ref())
            .map(|b| b.pointwise.lower[position] <= self.truth[position] && self.truth[position] <= b.pointwise.upper[position])
            .collect();
        (!hits.is_empty()).then(|| hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }
}

/// Rough wall-clock forecast from a per-fit cost model.
pub fn estimate_runtime(dgp: &DgpConfig, mc: &MonteCarloConfig, threads: usize) -> Duration {
    let n = dgp.n as f64;
    let d = dgp.d_x.max(1) as f64;
    let grid = match mc.parameter {
        Parameter::Dte => mc.quantile_levels.len() as f64,
        Parameter::Qte => {
            // span of the grid under a normal approximation to the control outcome
            let (beta, gamma2) = dgp.coefficients();
            let var_g: f64 = beta
                .iter()
                .zip(&gamma2)
                .map(|(&b, &c)| b * b / 12.0 + c * c * 4.0 / 45.0 + b * c / 6.0)
                .sum();
            let sd = (var_g + dgp.noise_sd * dgp.noise_sd).sqrt();
            let z = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
            let levels = &mc.quantile_levels;
            let width = (z.inverse_cdf(levels[levels.len() - 1]) - z.inverse_cdf(levels[0])) * sd;
            (width + 1.0 + 2.0 * mc.qte_grid_margin) / mc.qte_grid_step
        }
    };
    let fits = grid * mc.folds as f64 * 2.0;
    let train = n * (mc.folds as f64 - 1.0) / mc.folds as f64 / 2.0;
    let mut per_rep = 2e-8 * n * d;
    for kind in &mc.estimators {
        per_rep += match kind {
            EstimatorKind::Simple => 1e-7 * n * grid,
            EstimatorKind::OracleAdjusted => 5e-8 * n * grid * d,
            EstimatorKind::LinearAdjusted => mc.folds as f64 * 2.0 * 3e-9 * train * d * d + fits * 1e-9 * train * d,
            EstimatorKind::LassoAdjusted => {
                let cv = mc.lasso.cv_folds as f64 + 1.0;
                fits * cv * mc.lasso.n_lambda as f64 * 2.3e-9 * train.powf(1.35) * d
            }
            EstimatorKind::GbtAdjusted => fits * mc.gbt.n_rounds as f64 * mc.gbt.max_depth as f64 * 9e-9 * train * d,
        };
        if let Some(b) = &mc.bands {
            per_rep += 2e-9 * b.b_draws as f64 * n * grid;
        }
    }
    let oracle = 6e-9 * mc.oracle_n as f64 * d;
    Duration::from_secs_f64(oracle + per_rep * mc.replications as f64 / threads.max(1) as f64)
}

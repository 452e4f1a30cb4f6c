//! Synthetic design, oracle truths and the Monte Carlo harness.

pub mod dgp;
pub mod metrics;
pub mod montecarlo;

pub use dgp::{generate_dgp, kappa, oracle_nuisance, oracle_sample, DgpConfig, OracleSample};
pub use metrics::{MetricsRow, MetricsTable};
pub use montecarlo::{
    estimate_runtime, run_monte_carlo, run_monte_carlo_with, BandConfig, EstimatorKind, MonteCarloConfig, MonteCarloRun,
    Parameter,
};

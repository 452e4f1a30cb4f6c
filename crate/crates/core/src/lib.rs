//! Regression-adjusted distributional treatment effects.
//!
//! Pipeline: a [`Dataset`] and a [`ThresholdGrid`] go through
//! [`crossfit_nuisance`] to get out-of-fold conditional CDF predictions,
//! [`adjusted_cdf`] turns them into per-arm CDF estimates with influence
//! values, the functionals in [`effects`] produce DTE, PTE and QTE curves,
//! and [`bootstrap`] adds multiplier-bootstrap bands. [`simulation`] holds
//! the synthetic design and the Monte Carlo loop.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below cover the common case.

pub mod bootstrap;
pub mod crossfit;
pub mod data;
pub mod ecdf;
pub mod effects;
pub mod error;
pub mod estimator;
pub mod learners;
pub mod scalar;
pub mod seed;
pub mod simulation;

pub use bootstrap::{
    bootstrap_curves, bootstrap_curves_counted, bootstrap_se, draw_multipliers, pointwise_band, uniform_band, BandEstimate, BandKind, BootstrapSe,
    MultiplierDraws,
};
pub use crossfit::{crossfit_nuisance, crossfit_with, NuisanceTensor};
pub use data::{
    assign_folds, make_threshold_grid, read_csv, validate_dataset, Dataset, FoldAssignment, GridSpec, RawTable,
    ThresholdGrid,
};
pub use ecdf::{empirical_cdf, SimpleCdf};
pub use effects::{cdf_curve, dte, pte, qte, EffectCurve, EffectKind, QuantileGrid};
pub use error::{Error, ErrorClass, Result};
pub use estimator::{adjusted_cdf, simple_estimate, CdfEstimate};
pub use learners::{Learner, LearnerFamily, LearnerSpec, NuisanceModel};
pub use scalar::Scalar;
pub use seed::derive_seed;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type ThresholdGrid64 = ThresholdGrid<f64>;
pub type ThresholdGrid32 = ThresholdGrid<f32>;
pub type NuisanceTensor64 = NuisanceTensor<f64>;
pub type NuisanceTensor32 = NuisanceTensor<f32>;
pub type CdfEstimate64 = CdfEstimate<f64>;
pub type CdfEstimate32 = CdfEstimate<f32>;
pub type EffectCurve64 = EffectCurve<f64>;
pub type EffectCurve32 = EffectCurve<f32>;
pub type BandEstimate64 = BandEstimate<f64>;
pub type BandEstimate32 = BandEstimate<f32>;

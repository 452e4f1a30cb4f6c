//! Supervised learners for the conditional distribution nuisance
//! `P(Y <= y | W = w, X = x)`, fitted as binary-mean regressions.

mod gbt;
mod lasso;
mod linalg;
mod linear;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use gbt::{GbtParams, Tree};
pub use lasso::{LassoFit, LassoParams, LogisticLasso};
pub use linear::LinearParams;

/// Learner family and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LearnerFamily {
    Linear(LinearParams),
    Lasso(LassoParams),
    Gbt(GbtParams),
}

/// A learner family plus the master seed for any internal randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub family: LearnerFamily,
    #[serde(default)]
    pub seed: u64,
}

impl LearnerSpec {
    pub fn linear() -> Self {
        Self {
            family: LearnerFamily::Linear(LinearParams::default()),
            seed: 0,
        }
    }

    pub fn lasso(params: LassoParams) -> Self {
        Self {
            family: LearnerFamily::Lasso(params),
            seed: 0,
        }
    }

    pub fn gbt(params: GbtParams) -> Self {
        Self {
            family: LearnerFamily::Gbt(params),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Builds a spec from the short name used in config files
    /// (`linear`, `lasso`, `gbt`) and an optional hyperparameter object.
    pub fn from_name(name: &str, params: Option<serde_json::Value>, seed: u64) -> Result<Self> {
        let params = params.unwrap_or_else(|| serde_json::json!({}));
        let family = match name {
            "linear" => LearnerFamily::Linear(serde_json::from_value(params)?),
            "lasso" => LearnerFamily::Lasso(serde_json::from_value(params)?),
            "gbt" => LearnerFamily::Gbt(serde_json::from_value(params)?),
            other => return Err(Error::Config(format!("unknown learner `{other}` (expected linear, lasso or gbt)"))),
        };
        let spec = Self { family, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            LearnerFamily::Linear(_) => "linear",
            LearnerFamily::Lasso(_) => "lasso",
            LearnerFamily::Gbt(_) => "gbt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.family {
            LearnerFamily::Linear(p) => p.validate(),
            LearnerFamily::Lasso(p) => p.validate(),
            LearnerFamily::Gbt(p) => p.validate(),
        }
    }
}

/// Fitted state of one nuisance regression.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceModel<F> {
    dim: usize,
    kind: ModelKind<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind<F> {
    /// Exact constant prediction (constant labels or no covariates).
    Constant(F),
    /// Linear probability model, clipped to `[0, 1]` on prediction.
    Linear { intercept: F, coef: Array1<F> },
    /// Logistic model with coefficients on the original feature scale.
    Logistic { intercept: F, coef: Array1<F>, lambda: F },
    /// Boosted trees on the log-odds scale.
    Trees {
        base_rate: F,
        base_score: F,
        learning_rate: F,
        trees: Vec<Tree<F>>,
    },
}

pub(crate) fn sigmoid<F: Scalar>(eta: F) -> F {
    if eta >= F::zero() {
        F::one() / (F::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (F::one() + e)
    }
}

impl<F: Scalar> NuisanceModel<F> {
    pub fn new(dim: usize, kind: ModelKind<F>) -> Self {
        Self { dim, kind }
    }

    pub fn constant(dim: usize, value: F) -> Self {
        Self::new(dim, ModelKind::Constant(value))
    }

    pub fn kind(&self) -> &ModelKind<F> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &'static str {
        match self.kind {
            ModelKind::Constant(_) => "constant",
            ModelKind::Linear { .. } => "linear",
            ModelKind::Logistic { .. } => "lasso",
            ModelKind::Trees { .. } => "gbt",
        }
    }

    /// Predicted probabilities, always inside `[0, 1]`.
    pub fn predict_proba(&self, x: ArrayView2<'_, F>) -> Result<Array1<F>> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let m = x.nrows();
        Ok(match &self.kind {
            ModelKind::Constant(c) => Array1::from_elem(m, *c),
            ModelKind::Linear { intercept, coef } => {
                let raw = x.dot(coef) + *intercept;
                raw.mapv(|v| v.max(F::zero()).min(F::one()))
            }
            ModelKind::Logistic { intercept, coef, .. } => (x.dot(coef) + *intercept).mapv(sigmoid),
            ModelKind::Trees {
                base_rate,
                base_score,
                learning_rate,
                trees,
            } => {
                if trees.is_empty() {
                    return Ok(Array1::from_elem(m, *base_rate));
                }
                Array1::from_shape_fn(m, |i| {
                    let row = x.row(i);
                    let s: F = trees.iter().map(|t| t.predict_row(row)).sum();
                    sigmoid(*base_score + *learning_rate * s)
                })
            }
        })
    }
}

/// Something that fits nuisance regressions on binary labels.
pub trait Learner<F: Scalar>: Sync {
    fn fit(&self, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>, seed: u64) -> Result<NuisanceModel<F>>;

    /// Fits one model per label vector over a shared design.
    ///
    /// Implementations may reuse work that depends only on `x`; results must
    /// equal calling [`Learner::fit`] per label unless a family documents
    /// otherwise.
    fn fit_many(&self, x: ArrayView2<'_, F>, labels: &[Array1<F>], seeds: &[u64]) -> Result<Vec<NuisanceModel<F>>> {
        labels.iter().zip(seeds).map(|(y, &s)| self.fit(x, y.view(), s)).collect()
    }
}

/// Checks labels and returns their mean, or the constant model when all are equal.
pub(crate) fn check_labels<F: Scalar>(x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>) -> Result<(F, Option<NuisanceModel<F>>)> {
    let m = labels.len();
    if m == 0 {
        return Err(Error::DegenerateTrainingSet);
    }
    if x.nrows() != m {
        return Err(Error::LengthMismatch {
            what: "labels".into(),
            expected: x.nrows(),
            got: m,
        });
    }
    if let Some(bad) = labels.iter().find(|&&v| v != F::zero() && v != F::one()) {
        return Err(Error::InvalidLabel(bad.to_f64_lossy()));
    }
    let ones = labels.iter().filter(|&&v| v == F::one()).count();
    let mean = F::of_usize(ones) / F::of_usize(m);
    let constant = if ones == 0 || ones == m {
        Some(NuisanceModel::constant(x.ncols(), mean))
    } else {
        None
    };
    Ok((mean, constant))
}

impl<F: Scalar> Learner<F> for LearnerSpec {
    fn fit(&self, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>, seed: u64) -> Result<NuisanceModel<F>> {
        match &self.family {
            LearnerFamily::Linear(p) => linear::fit(p, x, labels),
            LearnerFamily::Lasso(p) => LogisticLasso::new(p.clone()).fit(x, labels, seed),
            LearnerFamily::Gbt(p) => gbt::fit(p, x, labels, seed),
        }
    }

    fn fit_many(&self, x: ArrayView2<'_, F>, labels: &[Array1<F>], seeds: &[u64]) -> Result<Vec<NuisanceModel<F>>> {
        match &self.family {
            LearnerFamily::Linear(p) => linear::fit_many(p, x, labels),
            LearnerFamily::Lasso(p) => LogisticLasso::new(p.clone()).fit_many(x, labels, seeds),
            LearnerFamily::Gbt(p) => labels.iter().zip(seeds).map(|(y, &s)| gbt::fit(p, x, y.view(), s)).collect(),
        }
    }
}

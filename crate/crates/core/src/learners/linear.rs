//! Linear probability model: least squares on the 0/1 label.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, cholesky_solve};
use super::{check_labels, ModelKind, NuisanceModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    /// Added to the diagonal of the centred Gram matrix.
    pub ridge_jitter: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { ridge_jitter: 1e-8 }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_jitter >= 0.0 && self.ridge_jitter.is_finite()) {
            return Err(Error::InvalidHyperparameter {
                name: "ridge_jitter".into(),
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(())
    }
}

struct Design<F> {
    means: Array1<F>,
    centred: Array2<F>,
    chol: Option<Array2<F>>,
}

fn prepare<F: Scalar>(p: &LinearParams, x: ArrayView2<'_, F>) -> Design<F> {
    let m = F::of_usize(x.nrows().max(1));
    let means = x.sum_axis(Axis(0)) / m;
    let centred = &x - &means;
    let chol = if x.ncols() == 0 {
        None
    } else {
        let gram = centred.t().dot(&centred);
        Some(cholesky(&gram, F::lit(p.ridge_jitter)))
    };
    Design { means, centred, chol }
}

fn solve<F: Scalar>(design: &Design<F>, labels: ArrayView1<'_, F>, mean: F) -> NuisanceModel<F> {
    let dim = design.means.len();
    match &design.chol {
        None => NuisanceModel::constant(dim, mean),
        Some(l) => {
            let yc = labels.mapv(|v| v - mean);
            let rhs = design.centred.t().dot(&yc);
            let coef = cholesky_solve(l, &rhs);
            let intercept = mean - design.means.dot(&coef);
            NuisanceModel::new(dim, ModelKind::Linear { intercept, coef })
        }
    }
}

pub(crate) fn fit<F: Scalar>(p: &LinearParams, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>) -> Result<NuisanceModel<F>> {
    let (mean, constant) = check_labels(x, labels)?;
    if let Some(c) = constant {
        return Ok(c);
    }
    Ok(solve(&prepare(p, x), labels, mean))
}

pub(crate) fn fit_many<F: Scalar>(p: &LinearParams, x: ArrayView2<'_, F>, labels: &[Array1<F>]) -> Result<Vec<NuisanceModel<F>>> {
    let mut design = None;
    labels
        .iter()
        .map(|y| {
            let (mean, constant) = check_labels(x, y.view())?;
            if let Some(c) = constant {
                return Ok(c);
            }
            let d = design.get_or_insert_with(|| prepare(p, x));
            Ok(solve(d, y.view(), mean))
        })
        .collect()
}

//! Treatment effect functionals of the CDF estimates: distributional (DTE),
//! probability (PTE) and quantile (QTE) effects between two arms, plus the
//! per-arm CDF itself as a curve.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::CdfEstimate;
use crate::scalar::{kahan_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    Cdf,
    Dte,
    Pte,
    Qte,
}

/// An effect of arm `arms.0` relative to arm `arms.1` over an index grid.
/// CDF curves use `arms = (w, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCurve<F> {
    pub kind: EffectKind,
    /// Thresholds (DTE), left bin edges (PTE) or quantile levels (QTE).
    pub index: Vec<F>,
    pub estimates: Vec<F>,
    /// Plug-in standard errors; `None` for QTE.
    pub se: Option<Vec<F>>,
    pub arms: (usize, usize),
    /// Bin width when all PTE bins share one.
    pub h: Option<F>,
    pub bin_edges: Option<Vec<F>>,
    /// Influence values of the contrast, `n x |index|` (DTE and PTE).
    pub influence: Option<Array2<F>>,
}

/// Strictly increasing quantile levels inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid<F> {
    taus: Vec<F>,
}

impl<F: Scalar> QuantileGrid<F> {
    pub fn new(taus: Vec<F>) -> Result<Self> {
        if taus.is_empty()
            || taus.iter().any(|&t| !(t > F::zero() && t < F::one()))
            || taus.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::BadQuantileGrid);
        }
        Ok(Self { taus })
    }

    pub fn taus(&self) -> &[F] {
        &self.taus
    }
}

/// A map from the `|grid| x K` CDF matrix to an effect curve.
pub trait Functional<F: Scalar>: Sync {
    fn apply(&self, theta: ArrayView2<'_, F>) -> Result<Vec<F>>;

    /// Variant used on bootstrap draws; must never fail on a well-formed matrix.
    fn apply_perturbed(&self, theta: ArrayView2<'_, F>) -> Vec<F> {
        self.apply(theta).expect("functional defined on every perturbed draw")
    }

    /// Index points at which `apply_perturbed` had to censor its value.
    fn censored(&self, _theta: ArrayView2<'_, F>) -> usize {
        0
    }
}

fn check_pair<F: Scalar>(est: &CdfEstimate<F>, w: usize, v: usize) -> Result<()> {
    let k = est.num_arms();
    if w >= k {
        return Err(Error::UnknownArm(w));
    }
    if v >= k {
        return Err(Error::UnknownArm(v));
    }
    if w == v {
        return Err(Error::SameArm(w));
    }
    Ok(())
}

fn column_variance<F: Scalar>(col: ndarray::ArrayView1<'_, F>) -> F {
    let n = col.len();
    let nf = F::of_usize(n);
    let mean = kahan_sum(col.iter().copied()) / nf;
    kahan_sum(col.iter().map(|&v| (v - mean) * (v - mean))) / F::of_usize(n - 1) / nf
}

#[derive(Debug, Clone, Copy)]
pub struct CdfFunctional {
    pub arm: usize,
}

impl<F: Scalar> Functional<F> for CdfFunctional {
    fn apply(&self, theta: ArrayView2<'_, F>) -> Result<Vec<F>> {
        Ok(theta.column(self.arm).to_vec())
    }
}

/// The raw CDF estimate of one arm with its plug-in standard errors.
pub fn cdf_curve<F: Scalar>(est: &CdfEstimate<F>, w: usize) -> Result<EffectCurve<F>> {
    if w >= est.num_arms() {
        return Err(Error::UnknownArm(w));
    }
    let influence = est.influence().index_axis(Axis(2), w).to_owned();
    let se = influence.axis_iter(Axis(1)).map(|c| column_variance(c).sqrt()).collect();
    Ok(EffectCurve {
        kind: EffectKind::Cdf,
        index: est.grid().values().to_vec(),
        estimates: est.theta_raw().column(w).to_vec(),
        se: Some(se),
        arms: (w, w),
        h: None,
        bin_edges: None,
        influence: Some(influence),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DteFunctional {
    pub arms: (usize, usize),
}

impl<F: Scalar> Functional<F> for DteFunctional {
    fn apply(&self, theta: ArrayView2<'_, F>) -> Result<Vec<F>> {
        let (w, v) = self.arms;
        Ok(theta.axis_iter(Axis(0)).map(|row| row[w] - row[v]).collect())
    }
}

/// `theta_w(y) - theta_v(y)` on the raw estimates, with plug-in standard errors.
pub fn dte<F: Scalar>(est: &CdfEstimate<F>, w: usize, v: usize) -> Result<EffectCurve<F>> {
    check_pair(est, w, v)?;
    let theta = est.theta_raw();
    let estimates = DteFunctional { arms: (w, v) }.apply(theta)?;
    let psi = est.influence();
    let influence = &psi.index_axis(Axis(2), w) - &psi.index_axis(Axis(2), v);
    let se = influence.axis_iter(Axis(1)).map(|c| column_variance(c).sqrt()).collect();
    Ok(EffectCurve {
        kind: EffectKind::Dte,
        index: est.grid().values().to_vec(),
        estimates,
        se: Some(se),
        arms: (w, v),
        h: None,
        bin_edges: None,
        influence: Some(influence),
    })
}

#[derive(Debug, Clone)]
pub struct PteFunctional {
    pub arms: (usize, usize),
    /// Grid positions of the bin edges.
    pub edges: Vec<usize>,
}

impl<F: Scalar> Functional<F> for PteFunctional {
    fn apply(&self, theta: ArrayView2<'_, F>) -> Result<Vec<F>> {
        let (w, v) = self.arms;
        Ok(self
            .edges
            .windows(2)
            .map(|e| (theta[[e[1], w]] - theta[[e[0], w]]) - (theta[[e[1], v]] - theta[[e[0], v]]))
            .collect())
    }
}

/// Difference between arms of the mass in each bin `(edges[k], edges[k + 1]]`.
pub fn pte<F: Scalar>(est: &CdfEstimate<F>, w: usize, v: usize, bin_edges: &[F]) -> Result<EffectCurve<F>> {
    check_pair(est, w, v)?;
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|e| e[0] >= e[1]) {
        return Err(Error::BadBinEdges);
    }
    let grid = est.grid();
    let edges: Vec<usize> = bin_edges
        .iter()
        .map(|&e| grid.position(e).ok_or(Error::EdgesOffGrid(e.to_f64_lossy())))
        .collect::<Result<_>>()?;
    let functional = PteFunctional { arms: (w, v), edges: edges.clone() };
    let estimates = functional.apply(est.theta_raw())?;
    let psi = est.influence();
    let n = est.num_units();
    let influence = Array2::from_shape_fn((n, edges.len() - 1), |(i, k)| {
        let (a, b) = (edges[k], edges[k + 1]);
        (psi[[i, b, w]] - psi[[i, a, w]]) - (psi[[i, b, v]] - psi[[i, a, v]])
    });
    let se = influence.axis_iter(Axis(1)).map(|c| column_variance(c).sqrt()).collect();
    let widths: Vec<F> = bin_edges.windows(2).map(|e| e[1] - e[0]).collect();
    let tol = F::lit(1e-9) * (F::one() + widths[0].abs());
    let h = widths.iter().all(|&d| (d - widths[0]).abs() <= tol).then_some(widths[0]);
    Ok(EffectCurve {
        kind: EffectKind::Pte,
        index: bin_edges[..bin_edges.len() - 1].to_vec(),
        estimates,
        se: Some(se),
        arms: (w, v),
        h,
        bin_edges: Some(bin_edges.to_vec()),
        influence: Some(influence),
    })
}

/// Clips to `[0, 1]` and takes the running maximum along the grid.
pub fn rearrange<F: Scalar>(cdf: impl IntoIterator<Item = F>) -> Vec<F> {
    let mut running = F::neg_infinity();
    cdf.into_iter()
        .map(|v| {
            running = running.max(v.max(F::zero()).min(F::one()));
            running
        })
        .collect()
}

/// Left inverse on a grid: position of the first value `>= tau`.
pub fn left_inverse<F: Scalar>(monotone_cdf: &[F], tau: F) -> Option<usize> {
    let pos = monotone_cdf.partition_point(|&v| v < tau);
    (pos < monotone_cdf.len()).then_some(pos)
}

#[derive(Debug, Clone)]
pub struct QteFunctional<F> {
    pub arms: (usize, usize),
    pub taus: Vec<F>,
    pub grid: Vec<F>,
}

impl<F: Scalar> QteFunctional<F> {
    fn quantiles(&self, theta: ArrayView2<'_, F>, arm: usize, capped: bool) -> Result<Vec<F>> {
        let cdf = rearrange(theta.column(arm).iter().copied());
        self.taus
            .iter()
            .map(|&tau| match left_inverse(&cdf, tau) {
                Some(g) => Ok(self.grid[g]),
                None if capped => Ok(*self.grid.last().expect("non-empty grid")),
                None => Err(Error::TauOutOfReach {
                    tau: tau.to_f64_lossy(),
                    arm,
                }),
            })
            .collect()
    }
}

impl<F: Scalar> Functional<F> for QteFunctional<F> {
    fn apply(&self, theta: ArrayView2<'_, F>) -> Result<Vec<F>> {
        let a = self.quantiles(theta, self.arms.0, false)?;
        let b = self.quantiles(theta, self.arms.1, false)?;
        Ok(a.iter().zip(&b).map(|(&x, &y)| x - y).collect())
    }

    /// Perturbed draws that never reach `tau` are censored at the top grid point.
    fn apply_perturbed(&self, theta: ArrayView2<'_, F>) -> Vec<F> {
        let a = self.quantiles(theta, self.arms.0, true).expect("capped inversion");
        let b = self.quantiles(theta, self.arms.1, true).expect("capped inversion");
        a.iter().zip(&b).map(|(&x, &y)| x - y).collect()
    }

    fn censored(&self, theta: ArrayView2<'_, F>) -> usize {
        let top = |arm: usize| rearrange(theta.column(arm).iter().copied()).last().copied().unwrap_or(F::zero());
        let (a, b) = (top(self.arms.0), top(self.arms.1));
        self.taus.iter().filter(|&&t| a < t || b < t).count()
    }
}

/// Quantile differences from the grid-inverted, rearranged CDF estimates.
///
/// Precision is bounded by the grid spacing. `continuous` must be set by the
/// caller to confirm that quantiles of the outcome are meaningful.
pub fn qte<F: Scalar>(est: &CdfEstimate<F>, w: usize, v: usize, taus: &QuantileGrid<F>, continuous: bool) -> Result<EffectCurve<F>> {
    check_pair(est, w, v)?;
    if !continuous {
        return Err(Error::DiscreteOutcome);
    }
    let functional = qte_functional(est, w, v, taus);
    let estimates = functional.apply(est.theta_raw())?;
    Ok(EffectCurve {
        kind: EffectKind::Qte,
        index: taus.taus().to_vec(),
        estimates,
        se: None,
        arms: (w, v),
        h: None,
        bin_edges: None,
        influence: None,
    })
}

pub fn qte_functional<F: Scalar>(est: &CdfEstimate<F>, w: usize, v: usize, taus: &QuantileGrid<F>) -> QteFunctional<F> {
    QteFunctional {
        arms: (w, v),
        taus: taus.taus().to_vec(),
        grid: est.grid().values().to_vec(),
    }
}

/// The functional that produced a curve, for the generic bootstrap path.
pub fn functional_for<F: Scalar>(est: &CdfEstimate<F>, curve: &EffectCurve<F>) -> Result<Box<dyn Functional<F>>> {
    Ok(match curve.kind {
        EffectKind::Cdf => Box::new(CdfFunctional { arm: curve.arms.0 }),
        EffectKind::Dte => Box::new(DteFunctional { arms: curve.arms }),
        EffectKind::Pte => {
            let edges = curve.bin_edges.as_ref().ok_or(Error::BadBinEdges)?;
            let grid = est.grid();
            let edges = edges
                .iter()
                .map(|&e| grid.position(e).ok_or(Error::EdgesOffGrid(e.to_f64_lossy())))
                .collect::<Result<_>>()?;
            Box::new(PteFunctional { arms: curve.arms, edges })
        }
        EffectKind::Qte => Box::new(qte_functional(est, curve.arms.0, curve.arms.1, &QuantileGrid::new(curve.index.clone())?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossfit::NuisanceTensor;
    use crate::data::{Dataset, ThresholdGrid};
    use crate::estimator::{adjusted_cdf, simple_estimate};
    use ndarray::{Array1, Array3};
    use proptest::prelude::*;

    fn estimate(y: Vec<f64>, arms: Vec<usize>, grid: Vec<f64>) -> CdfEstimate<f64> {
        let n = y.len();
        let data = Dataset::from_parts(Array1::from(y), arms, Array2::zeros((n, 0)), 2).unwrap();
        simple_estimate(&data, &ThresholdGrid::new(grid).unwrap()).unwrap()
    }

    #[test]
    fn arm_checks() {
        let est = estimate(vec![1.0, 2.0, 3.0, 4.0], vec![0, 0, 1, 1], vec![2.0]);
        assert!(matches!(dte(&est, 0, 0), Err(Error::SameArm(0))));
        assert!(matches!(dte(&est, 0, 2), Err(Error::UnknownArm(2))));
    }

    #[test]
    fn identical_arms_give_zero_effects() {
        let est = estimate(vec![1.0, 2.0, 1.0, 2.0], vec![0, 0, 1, 1], vec![0.0, 1.0, 1.5, 2.0]);
        assert!(dte(&est, 1, 0).unwrap().estimates.iter().all(|&v| v == 0.0));
        assert!(pte(&est, 1, 0, &[0.0, 1.0, 2.0]).unwrap().estimates.iter().all(|&v| v == 0.0));
        let taus = QuantileGrid::new(vec![0.25, 0.5, 0.9]).unwrap();
        assert!(qte(&est, 1, 0, &taus, true).unwrap().estimates.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pte_rules() {
        let est = estimate(vec![1.0, 2.0, 3.0, 4.0, 2.0, 3.0], vec![0, 0, 0, 1, 1, 1], vec![0.0, 2.0, 4.0]);
        assert!(matches!(pte(&est, 1, 0, &[0.0, 3.0]), Err(Error::EdgesOffGrid(_))));
        assert!(matches!(pte(&est, 1, 0, &[2.0]), Err(Error::BadBinEdges)));
        // partition of (0, 4] telescopes to DTE(4) - DTE(0) = 0 once both CDFs reach 1
        let p = pte(&est, 1, 0, &[0.0, 2.0, 4.0]).unwrap();
        assert!(p.estimates.iter().sum::<f64>().abs() < 1e-15);
        assert_eq!(p.h, Some(2.0));
        assert_eq!(p.index, vec![0.0, 2.0]);
    }

    #[test]
    fn left_inverse_exact_attainment() {
        assert_eq!(left_inverse(&[0.25, 0.5, 0.75, 1.0], 0.5), Some(1));
        assert_eq!(left_inverse(&[0.25, 0.5, 0.75], 0.8), None);
        assert_eq!(rearrange(vec![-0.1, 0.3, 0.2, 1.2]), vec![0.0, 0.3, 0.3, 1.0]);
    }

    #[test]
    fn qte_requires_continuity_flag_and_reach() {
        let est = estimate(vec![1.0, 2.0, 3.0, 4.0], vec![0, 0, 1, 1], vec![1.0, 2.0, 3.0]);
        let taus = QuantileGrid::new(vec![0.5]).unwrap();
        assert!(matches!(qte(&est, 1, 0, &taus, false), Err(Error::DiscreteOutcome)));
        // arm 1 holds {3, 4}; its CDF at the top grid point 3 is 0.5
        let high = QuantileGrid::new(vec![0.9]).unwrap();
        assert!(matches!(qte(&est, 1, 0, &high, true), Err(Error::TauOutOfReach { arm: 1, .. })));
        assert_eq!(qte(&est, 1, 0, &taus, true).unwrap().estimates, vec![2.0]);
        assert!(QuantileGrid::new(vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn dte_se_matches_variance_covariance_formula() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 37) % 23) as f64 / 3.0).collect();
        let arms: Vec<usize> = (0..40).map(|i| (i * 7 % 5 < 2) as usize).collect();
        let n = y.len();
        let data = Dataset::from_parts(Array1::from(y), arms, Array2::zeros((n, 0)), 2).unwrap();
        let grid = ThresholdGrid::new(vec![1.0, 3.0, 5.0]).unwrap();
        let gamma = Array3::from_shape_fn((n, 3, 2), |(i, g, w)| ((i + g + w) % 4) as f64 / 4.0);
        let est = adjusted_cdf(&data, &NuisanceTensor::from_array(gamma), &grid).unwrap();
        let curve = dte(&est, 1, 0).unwrap();
        for g in 0..3 {
            let v = est.variance()[[g, 1]] + est.variance()[[g, 0]] - 2.0 * est.covariance(g, 1, 0);
            assert!((curve.se.as_ref().unwrap()[g] - v.sqrt()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn dte_antisymmetric_and_pte_consistent(
            ys in proptest::collection::vec(0.0f64..10.0, 8..40),
            shift in -2.0f64..2.0,
        ) {
            let n = ys.len();
            let arms: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let y: Vec<f64> = ys.iter().zip(&arms).map(|(&v, &a)| v + a as f64 * shift).collect();
            let grid: Vec<f64> = (-2..=12).map(|v| v as f64).collect();
            let est = estimate(y, arms, grid);
            let a = dte(&est, 0, 1).unwrap();
            let b = dte(&est, 1, 0).unwrap();
            for (x, y) in a.estimates.iter().zip(&b.estimates) {
                prop_assert_eq!(*x, -*y);
            }
            let p = pte(&est, 1, 0, &[0.0, 3.0, 7.0]).unwrap();
            let pos = |v: f64| est.grid().position(v).unwrap();
            prop_assert!((p.estimates[0] - (b.estimates[pos(3.0)] - b.estimates[pos(0.0)])).abs() < 1e-15);
            prop_assert!((p.estimates[1] - (b.estimates[pos(7.0)] - b.estimates[pos(3.0)])).abs() < 1e-15);
        }

        #[test]
        fn left_inverse_property(raw in proptest::collection::vec(-0.2f64..1.2, 1..30), tau in 0.01f64..0.99) {
            let cdf = rearrange(raw);
            if let Some(g) = left_inverse(&cdf, tau) {
                prop_assert!(cdf[g] >= tau);
                prop_assert!(cdf[..g].iter().all(|&v| v < tau));
            } else {
                prop_assert!(cdf.iter().all(|&v| v < tau));
            }
        }

        #[test]
        fn qte_translation_equivariance(ys in proptest::collection::vec(0.0f64..5.0, 10..40), k in 0i32..20) {
            // integer-valued outcomes on an integer grid; shifting arm 1 by k shifts its quantiles by k
            let n = ys.len();
            let arms: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let base: Vec<f64> = ys.iter().map(|v| v.floor()).collect();
            let grid: Vec<f64> = (0..=30).map(|v| v as f64).collect();
            let taus = QuantileGrid::new(vec![0.2, 0.5, 0.8]).unwrap();
            let q0 = qte(&estimate(base.clone(), arms.clone(), grid.clone()), 1, 0, &taus, true).unwrap();
            let shifted: Vec<f64> = base.iter().zip(&arms).map(|(&v, &a)| v + (a as i32 * k) as f64).collect();
            let q1 = qte(&estimate(shifted, arms, grid), 1, 0, &taus, true).unwrap();
            for (a, b) in q0.estimates.iter().zip(&q1.estimates) {
                prop_assert_eq!(*b - *a, k as f64);
            }
        }
    }
}

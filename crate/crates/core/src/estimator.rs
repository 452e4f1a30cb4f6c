//! Regression-adjusted distribution function estimates and their influence values.
//!
//! For arm `w` and threshold `y` the estimate is
//!
//! ```text
//! theta = 1/n_w * sum_{i: W_i = w} (1{Y_i <= y} - gamma(X_i)) + 1/n * sum_i gamma(X_i)
//! ```
//!
//! and the per-unit influence value is
//!
//! ```text
//! psi_i = 1{W_i = w} (1{Y_i <= y} - gamma(X_i)) / (n_w / n) + gamma(X_i) - theta
//! ```
//!
//! With the empirical arm share in the denominator, `theta` is the exact root
//! of the sample moment `mean_i psi_i = 0`.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::crossfit::NuisanceTensor;
use crate::data::{Dataset, ThresholdGrid};
use crate::ecdf::empirical_cdf;
use crate::error::{Error, Result};
use crate::scalar::{kahan_sum, Scalar};

/// Adjusted CDF levels on a grid, with per-unit influence values.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate<F> {
    theta: Array2<F>,
    influence: Array3<F>,
    variance: Array2<F>,
    grid: ThresholdGrid<F>,
}

/// A raw estimate that left `[0, 1]` by more than the reporting tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excursion<F> {
    pub grid_index: usize,
    pub arm: usize,
    pub value: F,
}

impl<F: Scalar> CdfEstimate<F> {
    /// Unclipped estimates, `|grid| x K`.
    pub fn theta_raw(&self) -> ArrayView2<'_, F> {
        self.theta.view()
    }

    /// Estimates clipped to `[0, 1]` for reporting.
    pub fn theta_clipped(&self) -> Array2<F> {
        self.theta.mapv(|v| v.max(F::zero()).min(F::one()))
    }

    /// Influence values, `n x |grid| x K`.
    pub fn influence(&self) -> ArrayView3<'_, F> {
        self.influence.view()
    }

    /// Plug-in sampling variance `Var(psi) / n`, `|grid| x K`.
    pub fn variance(&self) -> ArrayView2<'_, F> {
        self.variance.view()
    }

    pub fn se(&self) -> Array2<F> {
        self.variance.mapv(F::sqrt)
    }

    pub fn grid(&self) -> &ThresholdGrid<F> {
        &self.grid
    }

    pub fn num_units(&self) -> usize {
        self.influence.dim().0
    }

    pub fn num_arms(&self) -> usize {
        self.theta.ncols()
    }

    /// Plug-in covariance `Cov(psi_w, psi_v) / n` at grid point `g`.
    pub fn covariance(&self, g: usize, w: usize, v: usize) -> F {
        let a = self.influence.slice(ndarray::s![.., g, w]);
        let b = self.influence.slice(ndarray::s![.., g, v]);
        sample_covariance(a.iter().copied(), b.iter().copied(), self.num_units()) / F::of_usize(self.num_units())
    }

    /// Raw estimates further than `tolerance` outside `[0, 1]`.
    pub fn excursions(&self, tolerance: F) -> Vec<Excursion<F>> {
        self.theta
            .indexed_iter()
            .filter(|(_, &v)| v < -tolerance || v > F::one() + tolerance)
            .map(|((g, w), &v)| Excursion { grid_index: g, arm: w, value: v })
            .collect()
    }
}

fn sample_covariance<F: Scalar>(a: impl Iterator<Item = F> + Clone, b: impl Iterator<Item = F> + Clone, n: usize) -> F {
    let nf = F::of_usize(n);
    let ma = kahan_sum(a.clone()) / nf;
    let mb = kahan_sum(b.clone()) / nf;
    kahan_sum(a.zip(b).map(|(x, y)| (x - ma) * (y - mb))) / F::of_usize(n - 1)
}

fn check_alignment<F: Scalar>(data: &Dataset<F>, gamma: ArrayView3<'_, F>, grid_len: usize) -> Result<()> {
    let (n, g, k) = gamma.dim();
    if n != data.len() || g != grid_len || k != data.num_arms() {
        return Err(Error::AlignmentMismatch(format!(
            "nuisance is {n} x {g} x {k}, data and grid need {} x {grid_len} x {}",
            data.len(),
            data.num_arms()
        )));
    }
    Ok(())
}

/// Point estimates from a nuisance array.
fn theta_from<F: Scalar>(data: &Dataset<F>, gamma: ArrayView3<'_, F>, grid: &ThresholdGrid<F>) -> Array2<F> {
    let n = data.len();
    let nf = F::of_usize(n);
    let k = data.num_arms();
    let counts: Vec<F> = data.arm_counts().iter().map(|&c| F::of_usize(c)).collect();
    let y = data.outcomes();
    let arms = data.arms();
    Array2::from_shape_fn((grid.len(), k), |(g, w)| {
        let t = grid.values()[g];
        let own = kahan_sum((0..n).filter(|&i| arms[i] == w).map(|i| {
            let ind = if y[i] <= t { F::one() } else { F::zero() };
            ind - gamma[[i, g, w]]
        }));
        let all = kahan_sum((0..n).map(|i| gamma[[i, g, w]]));
        own / counts[w] + all / nf
    })
}

fn influence_from<F: Scalar>(data: &Dataset<F>, gamma: ArrayView3<'_, F>, grid: &ThresholdGrid<F>, theta: ArrayView2<'_, F>) -> Array3<F> {
    let n = data.len();
    let shares = data.arm_shares();
    let y = data.outcomes();
    let arms = data.arms();
    Array3::from_shape_fn((n, grid.len(), data.num_arms()), |(i, g, w)| {
        let gam = gamma[[i, g, w]];
        let first = if arms[i] == w {
            let ind = if y[i] <= grid.values()[g] { F::one() } else { F::zero() };
            (ind - gam) / shares[w]
        } else {
            F::zero()
        };
        first + gam - theta[[g, w]]
    })
}

/// Influence values for given estimates.
pub fn influence_values<F: Scalar>(
    data: &Dataset<F>,
    nuisance: &NuisanceTensor<F>,
    grid: &ThresholdGrid<F>,
    theta: ArrayView2<'_, F>,
) -> Result<Array3<F>> {
    check_alignment(data, nuisance.predictions(), grid.len())?;
    if theta.dim() != (grid.len(), data.num_arms()) {
        return Err(Error::AlignmentMismatch("theta shape does not match grid and arms".into()));
    }
    Ok(influence_from(data, nuisance.predictions(), grid, theta))
}

pub fn adjusted_cdf<F: Scalar>(data: &Dataset<F>, nuisance: &NuisanceTensor<F>, grid: &ThresholdGrid<F>) -> Result<CdfEstimate<F>> {
    let gamma = nuisance.predictions();
    check_alignment(data, gamma, grid.len())?;
    let theta = theta_from(data, gamma, grid);
    let influence = influence_from(data, gamma, grid, theta.view());
    let n = data.len();
    let variance = Array2::from_shape_fn(theta.dim(), |(g, w)| {
        let col = influence.slice(ndarray::s![.., g, w]);
        sample_covariance(col.iter().copied(), col.iter().copied(), n) / F::of_usize(n)
    });
    Ok(CdfEstimate {
        theta,
        influence,
        variance,
        grid: grid.clone(),
    })
}

/// The unadjusted estimator written in the same form: the nuisance is the
/// arm's empirical CDF itself, so the estimate is the empirical CDF and the
/// influence values are those of the sample proportion.
pub fn simple_estimate<F: Scalar>(data: &Dataset<F>, grid: &ThresholdGrid<F>) -> Result<CdfEstimate<F>> {
    let cdf = empirical_cdf(data, grid).values;
    let gamma = Array3::from_shape_fn((data.len(), grid.len(), data.num_arms()), |(_, g, w)| cdf[[g, w]]);
    adjusted_cdf(data, &NuisanceTensor::from_array(gamma), grid)
}

/// Sample moment `mean_i psi_i` at fixed `theta` for an arbitrary nuisance array.
pub fn sample_moment<F: Scalar>(
    data: &Dataset<F>,
    gamma: ArrayView3<'_, F>,
    grid: &ThresholdGrid<F>,
    theta: ArrayView2<'_, F>,
) -> Result<Array2<F>> {
    check_alignment(data, gamma, grid.len())?;
    let psi = influence_from(data, gamma, grid, theta);
    let n = F::of_usize(data.len());
    Ok(Array2::from_shape_fn(theta.dim(), |(g, w)| {
        kahan_sum(psi.slice(ndarray::s![.., g, w]).iter().copied()) / n
    }))
}

/// Central finite difference of the sample moment in the nuisance direction
/// `direction`, holding `theta` fixed. Returns one derivative per `(grid, arm)` cell.
pub fn orthogonality_probe<F: Scalar>(
    data: &Dataset<F>,
    nuisance: &NuisanceTensor<F>,
    grid: &ThresholdGrid<F>,
    theta: ArrayView2<'_, F>,
    direction: ArrayView3<'_, F>,
    step: F,
) -> Result<Array2<F>> {
    let gamma = nuisance.predictions();
    if direction.dim() != gamma.dim() {
        return Err(Error::AlignmentMismatch("direction shape differs from nuisance".into()));
    }
    let plus = &gamma + &(&direction * step);
    let minus = &gamma - &(&direction * step);
    let up = sample_moment(data, plus.view(), grid, theta)?;
    let down = sample_moment(data, minus.view(), grid, theta)?;
    Ok((up - down) / (step + step))
}

/// Coefficient of a unit-constant nuisance shift in the sample moment:
/// `mean_i (1 - 1{W_i = w} / (n_w / n))` per arm.
pub fn constant_shift_coefficient<F: Scalar>(data: &Dataset<F>) -> Vec<F> {
    let shares = data.arm_shares();
    let n = F::of_usize(data.len());
    (0..data.num_arms())
        .map(|w| {
            kahan_sum(data.arms().iter().map(|&a| F::one() - if a == w { F::one() / shares[w] } else { F::zero() })) / n
        })
        .collect()
}

impl<F: Scalar> CdfEstimate<F> {
    /// Mean influence per `(grid, arm)` cell; zero up to rounding.
    pub fn influence_means(&self) -> Array2<F> {
        let n = F::of_usize(self.num_units());
        self.influence.sum_axis(Axis(0)) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecdf::empirical_cdf;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn four_units() -> (Dataset<f64>, ThresholdGrid<f64>, NuisanceTensor<f64>) {
        let data = Dataset::from_parts(array![1.0, 3.0, 2.0, 4.0], vec![0, 0, 1, 1], Array2::zeros((4, 0)), 2).unwrap();
        let grid = ThresholdGrid::new(vec![2.0]).unwrap();
        let mut gamma = Array3::zeros((4, 1, 2));
        for (i, v) in [0.2, 0.4, 0.6, 0.8].iter().enumerate() {
            gamma[[i, 0, 0]] = *v;
            gamma[[i, 0, 1]] = 0.5;
        }
        (data, grid, NuisanceTensor::from_array(gamma))
    }

    #[test]
    fn hand_computed_four_unit_example() {
        let (data, grid, nuis) = four_units();
        let est = adjusted_cdf(&data, &nuis, &grid).unwrap();
        // (1/2)((1 - .2) + (0 - .4)) + (1/4)(.2 + .4 + .6 + .8) = 0.2 + 0.5
        assert!((est.theta_raw()[[0, 0]] - 0.7).abs() < 1e-15);
        // unit 1: (1 - .2) / .5 + .2 - .7
        assert!((est.influence()[[0, 0, 0]] - 1.1).abs() < 1e-15);
        // a unit outside arm 0 only carries gamma - theta
        assert!((est.influence()[[2, 0, 0]] - (0.6 - 0.7)).abs() < 1e-15);
        assert!(est.influence_means().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn alignment_checked() {
        let (data, _, nuis) = four_units();
        let grid = ThresholdGrid::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(adjusted_cdf(&data, &nuis, &grid), Err(Error::AlignmentMismatch(_))));
    }

    #[test]
    fn simple_estimate_is_empirical_cdf() {
        let (data, grid, _) = four_units();
        let est = simple_estimate(&data, &grid).unwrap();
        assert_eq!(est.theta_raw(), empirical_cdf(&data, &grid).values);
        // variance of a sample proportion: p(1-p)/n_w scaled by n/(n-1)
        let v = est.variance()[[0, 0]];
        let psi: Vec<f64> = (0..4).map(|i| est.influence()[[i, 0, 0]]).collect();
        let expect = psi.iter().map(|p| p * p).sum::<f64>() / 3.0 / 4.0;
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn dte_covariance_formula() {
        let (data, grid, nuis) = four_units();
        let est = adjusted_cdf(&data, &nuis, &grid).unwrap();
        let c01 = est.covariance(0, 0, 1);
        let c00 = est.covariance(0, 0, 0);
        assert!((c00 - est.variance()[[0, 0]]).abs() < 1e-15);
        assert!(c01.is_finite());
    }

    #[test]
    fn constant_shift_coefficient_vanishes() {
        let (data, _, _) = four_units();
        assert!(constant_shift_coefficient(&data).iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn probe_identity_for_unit_varying_direction() {
        // derivative equals mean(h) - mean over arm w of h
        let (data, grid, nuis) = four_units();
        let est = adjusted_cdf(&data, &nuis, &grid).unwrap();
        let h = Array3::from_shape_fn((4, 1, 2), |(i, _, _)| [0.3, -0.1, 0.5, 0.9][i]);
        let d = orthogonality_probe(&data, &nuis, &grid, est.theta_raw(), h.view(), 1e-3).unwrap();
        let mean_all = (0.3 - 0.1 + 0.5 + 0.9) / 4.0;
        assert!((d[[0, 0]] - (mean_all - 0.1)).abs() < 1e-12);
        assert!((d[[0, 1]] - (mean_all - 0.7)).abs() < 1e-12);
        let zero = Array3::zeros((4, 1, 2));
        let d = orthogonality_probe(&data, &nuis, &grid, est.theta_raw(), zero.view(), 1e-3).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<(usize, f64)>, Vec<f64>, f64)> {
        (
            proptest::collection::vec((0usize..3, -3.0f64..3.0), 6..40),
            proptest::collection::vec(0.0f64..1.0, 120),
            0.0f64..1.0,
        )
    }

    proptest! {
        #[test]
        fn moment_zero_and_constant_collapse((rows, gam, c) in arb_case()) {
            let n = rows.len();
            let mut arms: Vec<usize> = rows.iter().map(|r| r.0).collect();
            arms[0] = 0; arms[1] = 1; arms[2] = 2;
            let y: Array1<f64> = rows.iter().map(|r| r.1).collect();
            let data = Dataset::from_parts(y, arms, Array2::zeros((n, 0)), 3).unwrap();
            let grid = ThresholdGrid::new(vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
            let gamma = Array3::from_shape_fn((n, 4, 3), |(i, g, w)| gam[(i * 12 + g * 3 + w) % gam.len()]);
            let est = adjusted_cdf(&data, &NuisanceTensor::from_array(gamma), &grid).unwrap();
            prop_assert!(est.influence_means().iter().all(|v| v.abs() < 1e-10));

            let flat = adjusted_cdf(&data, &NuisanceTensor::constant(n, 4, 3, c), &grid).unwrap();
            let ecdf = empirical_cdf(&data, &grid).values;
            for (a, b) in flat.theta_raw().iter().zip(ecdf.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

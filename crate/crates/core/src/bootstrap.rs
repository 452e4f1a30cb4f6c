//! Multiplier bootstrap for pointwise and uniform bands over effect curves.
//!
//! Perturbed estimates are `theta + 1/n * sum_i xi_i psi_i` with multipliers
//! `xi = m1 / sqrt(2) + (m2^2 - 1) / 2`, which have mean 0, variance 1 and
//! third moment 1. Nuisance models are never refit.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::effects::{functional_for, EffectCurve, Functional};
use crate::error::{Error, Result};
use crate::estimator::CdfEstimate;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from};

/// Smallest draw count accepted for IQR-based standard errors.
pub const MIN_DRAWS: usize = 20;

/// Default number of bootstrap draws.
pub const DEFAULT_DRAWS: usize = 1000;

/// `B x n` multipliers; row `b` is generated from `derive_seed(seed, [b])`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierDraws<F> {
    xi: Array2<F>,
    seed: u64,
}

impl<F: Scalar> MultiplierDraws<F> {
    /// Wraps a hand-made multiplier matrix.
    pub fn from_matrix(xi: Array2<F>, seed: u64) -> Self {
        Self { xi, seed }
    }

    pub fn xi(&self) -> ArrayView2<'_, F> {
        self.xi.view()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_draws(&self) -> usize {
        self.xi.nrows()
    }

    pub fn num_units(&self) -> usize {
        self.xi.ncols()
    }
}

/// One multiplier from two independent standard normals.
pub fn multiplier(m1: f64, m2: f64) -> f64 {
    m1 / std::f64::consts::SQRT_2 + (m2 * m2 - 1.0) / 2.0
}

pub fn draw_multipliers<F: Scalar>(n: usize, b: usize, seed: u64) -> MultiplierDraws<F> {
    let rows: Vec<Vec<F>> = (0..b)
        .into_par_iter()
        .map(|row| {
            let mut rng = rng_from(derive_seed(seed, &[row as u64]));
            (0..n)
                .map(|_| {
                    let m1: f64 = StandardNormal.sample(&mut rng);
                    let m2: f64 = StandardNormal.sample(&mut rng);
                    F::lit(multiplier(m1, m2))
                })
                .collect()
        })
        .collect();
    let flat: Vec<F> = rows.into_iter().flatten().collect();
    let xi = Array2::from_shape_vec((b, n), flat).expect("rows of equal length");
    MultiplierDraws { xi, seed }
}

fn check_units<F: Scalar>(n: usize, draws: &MultiplierDraws<F>) -> Result<()> {
    if draws.num_units() != n {
        return Err(Error::AlignmentMismatch(format!(
            "multipliers cover {} units, influence values cover {n}",
            draws.num_units()
        )));
    }
    Ok(())
}

/// Bootstrap draws of a curve that is linear in the CDF estimates (DTE, PTE):
/// `estimate + 1/n * xi . influence`. Returns a `B x |index|` matrix.
pub fn bootstrap_linear<F: Scalar>(curve: &EffectCurve<F>, draws: &MultiplierDraws<F>) -> Result<Array2<F>> {
    let psi = curve.influence.as_ref().ok_or(Error::MissingInfluence)?;
    check_units(psi.nrows(), draws)?;
    let n = F::of_usize(psi.nrows());
    let point = Array1::from(curve.estimates.clone());
    Ok(&(draws.xi.dot(psi) / n) + &point)
}

/// Perturbed CDF matrices pushed through an arbitrary functional.
pub fn bootstrap_functional<F: Scalar>(
    est: &CdfEstimate<F>,
    functional: &dyn Functional<F>,
    draws: &MultiplierDraws<F>,
) -> Result<Array2<F>> {
    Ok(bootstrap_functional_counted(est, functional, draws)?.0)
}

/// As [`bootstrap_functional`], also counting censored (draw, index) cells.
pub fn bootstrap_functional_counted<F: Scalar>(
    est: &CdfEstimate<F>,
    functional: &dyn Functional<F>,
    draws: &MultiplierDraws<F>,
) -> Result<(Array2<F>, usize)> {
    let psi = est.influence();
    let (n, g, k) = psi.dim();
    check_units(n, draws)?;
    let flat = psi
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, g * k))
        .expect("contiguous influence array");
    let shifts = draws.xi.dot(&flat) / F::of_usize(n);
    let theta = est.theta_raw();
    let rows: Vec<(Vec<F>, usize)> = (0..shifts.nrows())
        .into_par_iter()
        .map(|b| {
            let shift = shifts.row(b);
            let perturbed = Array2::from_shape_fn((g, k), |(a, b)| theta[[a, b]] + shift[a * k + b]);
            (functional.apply_perturbed(perturbed.view()), functional.censored(perturbed.view()))
        })
        .collect();
    let width = rows.first().map_or(0, |r| r.0.len());
    let censored = rows.iter().map(|r| r.1).sum();
    let flat = rows.into_iter().flat_map(|r| r.0).collect();
    Ok((Array2::from_shape_vec((shifts.nrows(), width), flat).expect("rows of equal width"), censored))
}

/// Bootstrap draws of `curve`: the linear path when contrast influence values
/// are attached, otherwise the generic functional path (QTE).
pub fn bootstrap_curves<F: Scalar>(est: &CdfEstimate<F>, curve: &EffectCurve<F>, draws: &MultiplierDraws<F>) -> Result<Array2<F>> {
    Ok(bootstrap_curves_counted(est, curve, draws)?.0)
}

/// As [`bootstrap_curves`], also returning the number of censored cells
/// (perturbed QTE draws whose CDF never reached the level).
pub fn bootstrap_curves_counted<F: Scalar>(est: &CdfEstimate<F>, curve: &EffectCurve<F>, draws: &MultiplierDraws<F>) -> Result<(Array2<F>, usize)> {
    if curve.influence.is_some() {
        Ok((bootstrap_linear(curve, draws)?, 0))
    } else {
        let functional = functional_for(est, curve)?;
        bootstrap_functional_counted(est, functional.as_ref(), draws)
    }
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted<F: Scalar>(sorted: &[F], p: f64) -> F {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = F::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy<F: Scalar>(values: impl Iterator<Item = F>) -> Vec<F> {
    let mut v: Vec<F> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap draws"));
    v
}

/// IQR-based bootstrap standard errors per index point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSe<F> {
    pub se: Vec<F>,
    /// Index points where the draws have zero spread.
    pub degenerate: Vec<usize>,
}

fn normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `(q75 - q25) / (z75 - z25)` of each column.
pub fn bootstrap_se<F: Scalar>(draws: ArrayView2<'_, F>) -> Result<BootstrapSe<F>> {
    if draws.nrows() < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            needed: MIN_DRAWS,
            got: draws.nrows(),
        });
    }
    let z = normal();
    let scale = F::lit(z.inverse_cdf(0.75) - z.inverse_cdf(0.25));
    let mut se = Vec::with_capacity(draws.ncols());
    let mut degenerate = Vec::new();
    for (j, col) in draws.axis_iter(Axis(1)).enumerate() {
        let sorted = sorted_copy(col.iter().copied());
        let s = (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)) / scale;
        if s <= F::zero() {
            degenerate.push(j);
        }
        se.push(s);
    }
    Ok(BootstrapSe { se, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Pointwise,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate<F> {
    pub level: F,
    pub kind: BandKind,
    pub critical: F,
    pub se: Vec<F>,
    pub lower: Vec<F>,
    pub upper: Vec<F>,
    /// Bootstrap draw count, when the band came from draws.
    pub draws: Option<usize>,
    /// Index points left out of the maximal statistic for zero spread.
    pub excluded: Vec<usize>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

fn band<F: Scalar>(estimates: &[F], se: &[F], critical: F) -> (Vec<F>, Vec<F>) {
    estimates
        .iter()
        .zip(se)
        .map(|(&e, &s)| (e - critical * s, e + critical * s))
        .unzip()
}

/// `estimate +- z_{1 - alpha/2} * se`.
pub fn pointwise_band<F: Scalar>(curve: &EffectCurve<F>, se: &[F], alpha: f64, draws: Option<usize>) -> Result<BandEstimate<F>> {
    check_alpha(alpha)?;
    if se.len() != curve.estimates.len() {
        return Err(Error::LengthMismatch {
            what: "standard errors".into(),
            expected: curve.estimates.len(),
            got: se.len(),
        });
    }
    let critical = F::lit(normal().inverse_cdf(1.0 - alpha / 2.0));
    let (lower, upper) = band(&curve.estimates, se, critical);
    Ok(BandEstimate {
        level: F::lit(1.0 - alpha),
        kind: BandKind::Pointwise,
        critical,
        se: se.to_vec(),
        lower,
        upper,
        draws,
        excluded: Vec::new(),
    })
}

/// Sup-t band: the critical value is the `1 - alpha` quantile over draws of
/// `max_y |phi_b(y) - phi(y)| / se(y)`. Zero-spread points are skipped in
/// the maximum and keep a zero-width band.
pub fn uniform_band<F: Scalar>(curve: &EffectCurve<F>, draws: ArrayView2<'_, F>, se: &BootstrapSe<F>, alpha: f64) -> Result<BandEstimate<F>> {
    check_alpha(alpha)?;
    let m = curve.estimates.len();
    if draws.ncols() != m || se.se.len() != m {
        return Err(Error::LengthMismatch {
            what: "bootstrap draws".into(),
            expected: m,
            got: draws.ncols(),
        });
    }
    let active: Vec<usize> = (0..m).filter(|j| !se.degenerate.contains(j)).collect();
    if active.is_empty() {
        return Err(Error::DegenerateDraws);
    }
    let t_max = sorted_copy(draws.axis_iter(Axis(0)).map(|row| {
        active
            .iter()
            .map(|&j| (row[j] - curve.estimates[j]).abs() / se.se[j])
            .fold(F::zero(), F::max)
    }));
    let critical = quantile_sorted(&t_max, 1.0 - alpha);
    let (lower, upper) = band(&curve.estimates, &se.se, critical);
    Ok(BandEstimate {
        level: F::lit(1.0 - alpha),
        kind: BandKind::Uniform,
        critical,
        se: se.se.clone(),
        lower,
        upper,
        draws: Some(draws.nrows()),
        excluded: se.degenerate.clone(),
    })
}

//! L1-penalised logistic regression by cyclic coordinate descent.
//!
//! Each penalty level is solved by iteratively reweighted least squares: the
//! log-likelihood is replaced by its quadratic approximation at the current
//! iterate and the resulting weighted lasso is minimised coordinate by
//! coordinate, sweeping the active set until it stabilises. A backtracking
//! step on the exact penalised objective keeps every outer iteration
//! monotone. The penalty is chosen by K-fold cross-validated deviance over a
//! log-spaced path from `lambda_max` (the smallest penalty that zeroes every
//! coefficient), with warm starts along the path. Features are standardised
//! internally and the intercept is never penalised.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_labels, sigmoid, ModelKind, NuisanceModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoParams {
    /// Number of penalty values on the path.
    pub n_lambda: usize,
    /// Smallest penalty as a fraction of `lambda_max`.
    pub lambda_min_ratio: f64,
    /// Folds for the internal penalty selection.
    pub cv_folds: usize,
    /// Fixed penalty on the standardised scale; skips cross-validation.
    pub lambda: Option<f64>,
    /// Convergence threshold on the weighted coefficient change.
    pub tol: f64,
    /// Cap on coordinate sweeps per reweighting step.
    pub max_sweeps: usize,
    /// Cap on reweighting steps per penalty value.
    pub max_irls: usize,
    /// Select the penalty once per design (on the middle label vector) and
    /// reuse it for every other label vector fitted on that design.
    pub share_lambda_across_thresholds: bool,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            n_lambda: 50,
            lambda_min_ratio: 1e-3,
            cv_folds: 5,
            lambda: None,
            tol: 1e-7,
            max_sweeps: 10_000,
            max_irls: 50,
            share_lambda_across_thresholds: false,
        }
    }
}

impl LassoParams {
    /// Shortened path used for desk-scale simulation runs.
    pub fn desk_scale() -> Self {
        Self {
            n_lambda: 25,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidHyperparameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if self.n_lambda < 1 {
            return bad("n_lambda", "must be at least 1");
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return bad("lambda_min_ratio", "must lie in (0, 1)");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds", "must be at least 2");
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || l.is_nan() {
                return bad("lambda", "must be non-negative");
            }
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol", "must be positive");
        }
        if self.max_sweeps == 0 || self.max_irls == 0 {
            return bad("max_sweeps", "iteration caps must be positive");
        }
        Ok(())
    }
}

/// Column-major standardised design.
struct Design<F> {
    m: usize,
    d: usize,
    cols: Vec<F>,
    mean: Vec<F>,
    scale: Vec<F>,
}

impl<F: Scalar> Design<F> {
    fn new(x: ArrayView2<'_, F>) -> Self {
        let (m, d) = x.dim();
        let mf = F::of_usize(m);
        let mut cols = Vec::with_capacity(m * d);
        let mut mean = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let col = x.column(j);
            let mu = col.iter().copied().sum::<F>() / mf;
            let var = col.iter().map(|&v| (v - mu) * (v - mu)).sum::<F>() / mf;
            let sd = var.sqrt();
            let usable = sd > F::epsilon() * (F::one() + mu.abs()) * F::lit(16.0);
            mean.push(mu);
            scale.push(if usable { sd } else { F::one() });
            if usable {
                cols.extend(col.iter().map(|&v| (v - mu) / sd));
            } else {
                cols.extend(std::iter::repeat_n(F::zero(), m));
            }
        }
        Design { m, d, cols, mean, scale }
    }

    fn col(&self, j: usize) -> &[F] {
        &self.cols[j * self.m..(j + 1) * self.m]
    }

    fn subset(&self, rows: &[usize]) -> Design<F> {
        let mut cols = Vec::with_capacity(rows.len() * self.d);
        for j in 0..self.d {
            let c = self.col(j);
            cols.extend(rows.iter().map(|&i| c[i]));
        }
        Design {
            m: rows.len(),
            d: self.d,
            cols,
            mean: self.mean.clone(),
            scale: self.scale.clone(),
        }
    }

    fn linear_predictor(&self, beta0: F, beta: &[F], out: &mut [F]) {
        out.iter_mut().for_each(|v| *v = beta0);
        for (j, &b) in beta.iter().enumerate() {
            if b != F::zero() {
                for (o, &x) in out.iter_mut().zip(self.col(j)) {
                    *o = *o + b * x;
                }
            }
        }
    }

    fn lambda_max(&self, y: &[F]) -> F {
        let mf = F::of_usize(self.m);
        let ybar = y.iter().copied().sum::<F>() / mf;
        (0..self.d)
            .map(|j| (self.col(j).iter().zip(y).map(|(&x, &yi)| x * (yi - ybar)).sum::<F>() / mf).abs())
            .fold(F::zero(), F::max)
    }
}

/// Dot product with four accumulators so the loop pipelines.
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let tail = ra.iter().zip(rb).fold(F::zero(), |t, (&x, &y)| t + x * y);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `r -= delta * x`.
fn sub_scaled<F: Scalar>(r: &mut [F], delta: F, x: &[F]) {
    for (ri, &xi) in r.iter_mut().zip(x) {
        *ri = *ri - delta * xi;
    }
}

fn softplus<F: Scalar>(eta: F) -> F {
    eta.max(F::zero()) + (-eta.abs()).exp().ln_1p()
}

/// Mean negative log-likelihood plus the L1 penalty.
fn penalized_objective<F: Scalar>(eta: &[F], y: &[F], beta: &[F], lambda: F) -> F {
    let m = F::of_usize(y.len());
    let nll = eta.iter().zip(y).map(|(&e, &yi)| softplus(e) - yi * e).sum::<F>() / m;
    nll + lambda * beta.iter().map(|b| b.abs()).sum::<F>()
}

fn soft_threshold<F: Scalar>(u: F, lambda: F) -> F {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        F::zero()
    }
}

fn logit<F: Scalar>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

/// Binomial deviance with probabilities clipped to `[1e-6, 1 - 1e-6]`.
fn deviance<F: Scalar>(p: F, y: F) -> F {
    let lo = F::lit(1e-6);
    let p = p.max(lo).min(F::one() - lo);
    let two = F::lit(2.0);
    -two * (y * p.ln() + (F::one() - y) * (F::one() - p).ln())
}

#[derive(Debug, Clone)]
struct PathPoint<F> {
    lambda: F,
    beta0: F,
    beta: Vec<F>,
    deviance: F,
}

struct Solver<'a, F> {
    design: &'a Design<F>,
    y: &'a [F],
    params: &'a LassoParams,
    beta0: F,
    beta: Vec<F>,
    eta: Vec<F>,
}

impl<'a, F: Scalar> Solver<'a, F> {
    fn new(design: &'a Design<F>, y: &'a [F], params: &'a LassoParams) -> Self {
        let ybar = y.iter().copied().sum::<F>() / F::of_usize(y.len());
        let beta0 = logit(ybar);
        Solver {
            design,
            y,
            params,
            beta0,
            beta: vec![F::zero(); design.d],
            eta: vec![beta0; design.m],
        }
    }

    /// One coordinate pass over `coords` (plus the intercept). Returns the
    /// largest weighted squared change.
    fn sweep(&mut self, coords: &[usize], w: &[F], xw: &[F], xwx: &[F], r: &mut [F], sw: F, lambda: F) -> F {
        let m = self.design.m;
        let mf = F::of_usize(self.design.m);
        let mut dlx = F::zero();
        for &j in coords {
            if xwx[j] == F::zero() {
                continue;
            }
            let col = self.design.col(j);
            let g = dot(&xw[j * m..(j + 1) * m], r) / mf;
            let old = self.beta[j];
            let new = soft_threshold(g + xwx[j] * old, lambda) / xwx[j];
            let delta = new - old;
            if delta != F::zero() {
                self.beta[j] = new;
                sub_scaled(r, delta, col);
                dlx = dlx.max(xwx[j] * delta * delta);
            }
        }
        let d0 = dot(w, r) / (sw * mf);
        if d0 != F::zero() {
            self.beta0 = self.beta0 + d0;
            r.iter_mut().for_each(|ri| *ri = *ri - d0);
            dlx = dlx.max(sw * d0 * d0);
        }
        dlx
    }

    /// Minimises the penalised objective at `lambda` from the current iterate.
    fn solve(&mut self, lambda: F, mut trace: Option<&mut Vec<F>>) {
        let m = self.design.m;
        let d = self.design.d;
        let mf = F::of_usize(m);
        let tol = F::lit(self.params.tol);
        let floor = F::lit(1e-5);
        let all: Vec<usize> = (0..d).collect();
        let mut obj = penalized_objective(&self.eta, self.y, &self.beta, lambda);
        if let Some(t) = trace.as_deref_mut() {
            t.push(obj);
        }
        let mut w = vec![F::zero(); m];
        let mut r = vec![F::zero(); m];
        let mut xwx = vec![F::zero(); d];
        let mut xw = vec![F::zero(); m * d];
        for _ in 0..self.params.max_irls {
            for i in 0..m {
                let p = sigmoid(self.eta[i]);
                w[i] = (p * (F::one() - p)).max(floor);
                r[i] = (self.y[i] - p) / w[i];
            }
            let sw = w.iter().copied().sum::<F>() / mf;
            for (j, v) in xwx.iter_mut().enumerate() {
                let col = self.design.col(j);
                let out = &mut xw[j * m..(j + 1) * m];
                for ((o, &x), &wi) in out.iter_mut().zip(col).zip(&w) {
                    *o = x * wi;
                }
                *v = dot(out, col) / mf;
            }
            let beta0_old = self.beta0;
            let beta_old = self.beta.clone();

            let mut sweeps = 0;
            'outer: loop {
                let dlx = self.sweep(&all, &w, &xw, &xwx, &mut r, sw, lambda);
                sweeps += 1;
                if dlx < tol || sweeps >= self.params.max_sweeps {
                    break;
                }
                let active: Vec<usize> = (0..d).filter(|&j| self.beta[j] != F::zero()).collect();
                loop {
                    let dlx = self.sweep(&active, &w, &xw, &xwx, &mut r, sw, lambda);
                    sweeps += 1;
                    if sweeps >= self.params.max_sweeps {
                        break 'outer;
                    }
                    if dlx < tol {
                        break;
                    }
                }
            }

            // exact objective at the proposed iterate, halving the step if it went up
            let mut eta_new = vec![F::zero(); m];
            self.design.linear_predictor(self.beta0, &self.beta, &mut eta_new);
            let mut new_obj = penalized_objective(&eta_new, self.y, &self.beta, lambda);
            let half = F::lit(0.5);
            let mut halvings = 0;
            while new_obj > obj && halvings < 30 {
                self.beta0 = beta0_old + (self.beta0 - beta0_old) * half;
                for (b, &o) in self.beta.iter_mut().zip(&beta_old) {
                    *b = o + (*b - o) * half;
                }
                self.design.linear_predictor(self.beta0, &self.beta, &mut eta_new);
                new_obj = penalized_objective(&eta_new, self.y, &self.beta, lambda);
                halvings += 1;
            }
            if new_obj > obj {
                self.beta0 = beta0_old;
                self.beta = beta_old;
                break;
            }
            let change = obj - new_obj;
            self.eta = eta_new;
            obj = new_obj;
            if let Some(t) = trace.as_deref_mut() {
                t.push(obj);
            }
            if change <= tol * (F::one() + obj.abs()) {
                break;
            }
        }
    }

    fn deviance(&self) -> F {
        let two = F::lit(2.0);
        two * self.eta.iter().zip(self.y).map(|(&e, &yi)| softplus(e) - yi * e).sum::<F>()
    }

    fn path(&mut self, lambdas: &[F], early_stop: bool) -> Vec<PathPoint<F>> {
        let ybar = self.y.iter().copied().sum::<F>() / F::of_usize(self.y.len());
        let null_dev = F::lit(2.0) * F::of_usize(self.y.len()) * -(ybar * ybar.ln() + (F::one() - ybar) * (F::one() - ybar).ln());
        let mut out: Vec<PathPoint<F>> = Vec::with_capacity(lambdas.len());
        for (k, &lambda) in lambdas.iter().enumerate() {
            self.solve(lambda, None);
            let dev = self.deviance();
            out.push(PathPoint {
                lambda,
                beta0: self.beta0,
                beta: self.beta.clone(),
                deviance: dev,
            });
            if early_stop && k >= 4 && null_dev > F::zero() {
                let ratio = F::one() - dev / null_dev;
                let prev = F::one() - out[k - 1].deviance / null_dev;
                if ratio > F::lit(0.999) || ratio - prev < F::lit(1e-5) * ratio {
                    break;
                }
            }
        }
        out
    }
}

fn lambda_path<F: Scalar>(lambda_max: F, params: &LassoParams) -> Vec<F> {
    let k = params.n_lambda;
    if k == 1 {
        return vec![lambda_max];
    }
    let ratio = F::lit(params.lambda_min_ratio);
    (0..k)
        .map(|i| lambda_max * ratio.powf(F::of_usize(i) / F::of_usize(k - 1)))
        .collect()
}

/// Result of a cross-validated fit.
#[derive(Debug, Clone)]
pub struct LassoFit<F> {
    /// Penalty values actually fitted (the path may stop early once the
    /// deviance stops improving).
    pub lambdas: Vec<F>,
    /// Mean held-out deviance per penalty value.
    pub cv_deviance: Vec<F>,
    /// Index into `lambdas` of the selected penalty.
    pub selected: usize,
    pub model: NuisanceModel<F>,
}

#[derive(Debug, Clone)]
pub struct LogisticLasso {
    params: LassoParams,
}

impl LogisticLasso {
    pub fn new(params: LassoParams) -> Self {
        Self { params }
    }

    fn to_model<F: Scalar>(design: &Design<F>, point: &PathPoint<F>) -> NuisanceModel<F> {
        let coef: Array1<F> = point.beta.iter().zip(&design.scale).map(|(&b, &s)| b / s).collect();
        let intercept = point.beta0 - coef.iter().zip(&design.mean).map(|(&c, &mu)| c * mu).sum::<F>();
        NuisanceModel::new(
            design.d,
            ModelKind::Logistic {
                intercept,
                coef,
                lambda: point.lambda,
            },
        )
    }

    fn intercept_only<F: Scalar>(design: &Design<F>, ybar: F, lambda: F) -> NuisanceModel<F> {
        NuisanceModel::new(
            design.d,
            ModelKind::Logistic {
                intercept: logit(ybar),
                coef: Array1::zeros(design.d),
                lambda,
            },
        )
    }

    fn fixed_lambda<F: Scalar>(&self, design: &Design<F>, y: &[F], lambda: F) -> NuisanceModel<F> {
        let ybar = y.iter().copied().sum::<F>() / F::of_usize(y.len());
        let lmax = design.lambda_max(y);
        if lambda >= lmax {
            return Self::intercept_only(design, ybar, lambda);
        }
        let mut lambdas: Vec<F> = lambda_path(lmax, &self.params).into_iter().filter(|&l| l > lambda).collect();
        lambdas.push(lambda);
        let mut solver = Solver::new(design, y, &self.params);
        let path = solver.path(&lambdas, false);
        Self::to_model(design, path.last().expect("non-empty path"))
    }

    fn cross_validated<F: Scalar>(&self, design: &Design<F>, y: &[F], seed: u64) -> LassoFit<F> {
        let m = design.m;
        let ybar = y.iter().copied().sum::<F>() / F::of_usize(m);
        let lmax = design.lambda_max(y);
        if lmax == F::zero() {
            return LassoFit {
                lambdas: vec![F::zero()],
                cv_deviance: vec![F::zero()],
                selected: 0,
                model: Self::intercept_only(design, ybar, F::zero()),
            };
        }
        let mut solver = Solver::new(design, y, &self.params);
        let full = solver.path(&lambda_path(lmax, &self.params), true);
        let lambdas: Vec<F> = full.iter().map(|p| p.lambda).collect();

        let folds = self.params.cv_folds.min(m);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng_from(seed));
        let mut fold_of = vec![0usize; m];
        for (p, &i) in order.iter().enumerate() {
            fold_of[i] = p % folds;
        }
        let mut total = vec![F::zero(); lambdas.len()];
        for v in 0..folds {
            let train: Vec<usize> = (0..m).filter(|&i| fold_of[i] != v).collect();
            let test: Vec<usize> = (0..m).filter(|&i| fold_of[i] == v).collect();
            let y_train: Vec<F> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<F> = test.iter().map(|&i| y[i]).collect();
            let test_design = design.subset(&test);
            let mut eta = vec![F::zero(); test.len()];
            let ones = y_train.iter().filter(|&&v| v == F::one()).count();
            if ones == 0 || ones == y_train.len() {
                let p = F::of_usize(ones) / F::of_usize(y_train.len());
                let dev: F = y_test.iter().map(|&yi| deviance(p, yi)).sum();
                total.iter_mut().for_each(|t| *t = *t + dev);
                continue;
            }
            let train_design = design.subset(&train);
            let mut s = Solver::new(&train_design, &y_train, &self.params);
            for (k, point) in s.path(&lambdas, false).iter().enumerate() {
                test_design.linear_predictor(point.beta0, &point.beta, &mut eta);
                let dev: F = eta.iter().zip(&y_test).map(|(&e, &yi)| deviance(sigmoid(e), yi)).sum();
                total[k] = total[k] + dev;
            }
        }
        let cv_deviance: Vec<F> = total.iter().map(|&t| t / F::of_usize(m)).collect();
        let mut selected = 0;
        for (k, &dev) in cv_deviance.iter().enumerate() {
            if dev < cv_deviance[selected] {
                selected = k;
            }
        }
        let model = if selected == 0 {
            Self::intercept_only(design, ybar, lambdas[0])
        } else {
            Self::to_model(design, &full[selected])
        };
        LassoFit {
            lambdas,
            cv_deviance,
            selected,
            model,
        }
    }

    /// Cross-validated fit exposing the penalty path and CV curve.
    pub fn cross_validate<F: Scalar>(&self, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>, seed: u64) -> Result<LassoFit<F>> {
        let (_, constant) = check_labels(x, labels)?;
        if let Some(c) = constant {
            return Ok(LassoFit {
                lambdas: vec![],
                cv_deviance: vec![],
                selected: 0,
                model: c,
            });
        }
        let design = Design::new(x);
        Ok(self.cross_validated(&design, &labels.to_vec(), seed))
    }

    /// Penalised objective after every reweighting step while solving at a
    /// single penalty from the intercept-only start.
    pub fn objective_trace<F: Scalar>(&self, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>, lambda: F) -> Result<Vec<F>> {
        check_labels(x, labels)?;
        let design = Design::new(x);
        let y = labels.to_vec();
        let mut solver = Solver::new(&design, &y, &self.params);
        let mut trace = Vec::new();
        solver.solve(lambda, Some(&mut trace));
        Ok(trace)
    }

    fn fit_on_design<F: Scalar>(&self, design: &Design<F>, y: &[F], seed: u64) -> NuisanceModel<F> {
        match self.params.lambda {
            Some(l) => self.fixed_lambda(design, y, F::lit(l)),
            None => self.cross_validated(design, y, seed).model,
        }
    }

    pub fn fit<F: Scalar>(&self, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>, seed: u64) -> Result<NuisanceModel<F>> {
        let (_, constant) = check_labels(x, labels)?;
        if let Some(c) = constant {
            return Ok(c);
        }
        let design = Design::new(x);
        Ok(self.fit_on_design(&design, &labels.to_vec(), seed))
    }

    pub fn fit_many<F: Scalar>(&self, x: ArrayView2<'_, F>, labels: &[Array1<F>], seeds: &[u64]) -> Result<Vec<NuisanceModel<F>>> {
        let mut constants = Vec::with_capacity(labels.len());
        for y in labels {
            constants.push(check_labels(x, y.view())?.1);
        }
        if constants.iter().all(Option::is_some) {
            return Ok(constants.into_iter().map(Option::unwrap).collect());
        }
        let design = Design::new(x);
        let shared = if self.params.share_lambda_across_thresholds && self.params.lambda.is_none() {
            // the non-constant label vector closest to the middle of the list
            let mid = labels.len() / 2;
            let reference = (0..labels.len())
                .filter(|&t| constants[t].is_none())
                .min_by_key(|&t| (t as isize - mid as isize).unsigned_abs())
                .expect("at least one non-constant label vector");
            let fit = self.cross_validated(&design, &labels[reference].to_vec(), seeds[reference]);
            Some(fit.lambdas[fit.selected])
        } else {
            None
        };
        Ok(labels
            .iter()
            .zip(seeds)
            .zip(constants)
            .map(|((y, &seed), constant)| match constant {
                Some(c) => c,
                None => match shared {
                    Some(l) => self.fixed_lambda(&design, &y.to_vec(), l),
                    None => self.fit_on_design(&design, &y.to_vec(), seed),
                },
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Learner, LearnerSpec};
    use ndarray::{Array2, Axis};
    use rand::Rng;

    fn synthetic(m: usize, d: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = rng_from(seed);
        let x = Array2::from_shape_fn((m, d), |_| rng.gen::<f64>());
        let y = x
            .axis_iter(Axis(0))
            .map(|row| {
                let eta = 4.0 * (row[0] - 0.5) - 3.0 * (row[1] - 0.5);
                (rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64
            })
            .collect();
        (x, y)
    }

    #[test]
    fn huge_penalty_gives_base_rate() {
        let (x, y) = synthetic(80, 5, 1);
        let spec = LearnerSpec::lasso(LassoParams {
            lambda: Some(1e6),
            ..Default::default()
        });
        let p = spec.fit(x.view(), y.view(), 0).unwrap().predict_proba(x.view()).unwrap();
        let base = y.mean().unwrap();
        assert!(p.iter().all(|&v| (v - base).abs() < 1e-12));
    }

    #[test]
    fn objective_monotone_over_reweighting_steps() {
        let (x, y) = synthetic(200, 10, 2);
        let lasso = LogisticLasso::new(LassoParams::default());
        for lambda in [0.1, 0.02, 0.001] {
            let trace = lasso.objective_trace(x.view(), y.view(), lambda).unwrap();
            assert!(trace.len() >= 2);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{trace:?}");
            }
        }
    }

    #[test]
    fn zero_penalty_matches_unpenalised_optimum() {
        // With lambda = 0 the score equations of plain logistic regression hold.
        let (x, y) = synthetic(300, 3, 3);
        let spec = LearnerSpec::lasso(LassoParams {
            lambda: Some(0.0),
            tol: 1e-12,
            ..Default::default()
        });
        let p = spec.fit(x.view(), y.view(), 0).unwrap().predict_proba(x.view()).unwrap();
        let resid = &y - &p;
        assert!(resid.sum().abs() < 1e-6);
        for j in 0..3 {
            let score: f64 = resid.iter().zip(x.column(j)).map(|(r, x)| r * x).sum();
            assert!(score.abs() < 1e-5, "score {j} = {score}");
        }
    }

    #[test]
    fn cv_selects_signal_and_drops_noise() {
        let (x, y) = synthetic(400, 20, 4);
        let fit = LogisticLasso::new(LassoParams::default()).cross_validate(x.view(), y.view(), 9).unwrap();
        assert!(fit.selected > 0);
        assert_eq!(fit.lambdas.len(), fit.cv_deviance.len());
        assert!(fit.lambdas.windows(2).all(|w| w[0] > w[1]));
        if let ModelKind::Logistic { coef, .. } = fit.model.kind() {
            assert!(coef[0] > 1.0);
            assert!(coef[1] < -1.0);
            let noise = coef.iter().skip(2).filter(|c| **c != 0.0).count();
            assert!(noise < 18);
        } else {
            panic!("expected logistic model");
        }
    }

    #[test]
    fn deterministic_given_seed_and_fit_many_consistent() {
        let (x, y) = synthetic(150, 6, 5);
        let spec = LearnerSpec::lasso(LassoParams::desk_scale());
        let a = spec.fit(x.view(), y.view(), 11).unwrap();
        let b = spec.fit(x.view(), y.view(), 11).unwrap();
        assert_eq!(a, b);
        let many = spec.fit_many(x.view(), &[y.clone(), Array1::ones(150)], &[11, 12]).unwrap();
        assert_eq!(many[0], a);
        assert_eq!(many[1].predict_proba(x.view()).unwrap(), Array1::<f64>::ones(150));
    }

    #[test]
    fn shared_lambda_mode_uses_one_penalty() {
        let (x, y) = synthetic(150, 6, 6);
        let y2 = y.mapv(|v| 1.0 - v);
        let spec = LearnerSpec::lasso(LassoParams {
            share_lambda_across_thresholds: true,
            ..LassoParams::desk_scale()
        });
        let models = spec.fit_many(x.view(), &[y, y2], &[1, 2]).unwrap();
        let lambdas: Vec<f64> = models
            .iter()
            .map(|m| match m.kind() {
                ModelKind::Logistic { lambda, .. } => *lambda,
                _ => panic!(),
            })
            .collect();
        assert_eq!(lambdas[0], lambdas[1]);
    }
}

//! Cross-fitted nuisance predictions.

use std::io::Write;

use ndarray::{Array1, Array3, ArrayView3, Axis};
use rayon::prelude::*;

use crate::data::{Dataset, FoldAssignment, ThresholdGrid};
use crate::error::{Error, Result};
use crate::learners::{Learner, LearnerSpec};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// Out-of-fold predictions `gamma[[i, g, w]]` of `P(Y <= grid[g] | W = w, X_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceTensor<F> {
    predictions: Array3<F>,
    folds: Option<FoldAssignment>,
    learner: Option<LearnerSpec>,
}

impl<F: Scalar> NuisanceTensor<F> {
    /// Wraps externally computed predictions (oracle nuisances, test fixtures).
    pub fn from_array(predictions: Array3<F>) -> Self {
        Self {
            predictions,
            folds: None,
            learner: None,
        }
    }

    pub fn constant(n: usize, grid_len: usize, arms: usize, value: F) -> Self {
        Self::from_array(Array3::from_elem((n, grid_len, arms), value))
    }

    pub fn predictions(&self) -> ArrayView3<'_, F> {
        self.predictions.view()
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        self.folds.as_ref()
    }

    pub fn learner(&self) -> Option<&LearnerSpec> {
        self.learner.as_ref()
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.predictions.dim()
    }

    /// Writes `i,fold,w,y,gamma_hat` rows (1-based unit, fold and arm indices).
    pub fn write_csv<W: Write>(&self, out: W, data: &Dataset<F>, grid: &ThresholdGrid<F>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["i", "fold", "w", "y", "gamma_hat"])?;
        let (n, g_len, k) = self.predictions.dim();
        for i in 0..n {
            let fold = self.folds.as_ref().map(|f| (f.fold_of()[i] + 1).to_string()).unwrap_or_default();
            for g in 0..g_len {
                for w in 0..k {
                    wtr.write_record([
                        (i + 1).to_string(),
                        fold.clone(),
                        data.arm_labels()[w].clone(),
                        grid.values()[g].to_string(),
                        self.predictions[[i, g, w]].to_string(),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Cross-fits with a [`LearnerSpec`], deriving job seeds from `spec.seed`.
pub fn crossfit_nuisance<F: Scalar>(
    data: &Dataset<F>,
    grid: &ThresholdGrid<F>,
    folds: &FoldAssignment,
    spec: &LearnerSpec,
) -> Result<NuisanceTensor<F>> {
    spec.validate()?;
    let mut t = crossfit_with(data, grid, folds, spec, spec.seed)?;
    t.learner = Some(spec.clone());
    Ok(t)
}

/// Cross-fits with any learner.
///
/// For every fold `l` and arm `w` the learner is trained on units outside
/// fold `l` assigned to arm `w`, one label vector `1{Y <= y}` per grid point,
/// and predicts for every unit of fold `l` regardless of arm. The seed of
/// job `(l, w, g)` is derived from `master_seed` alone, so results do not
/// depend on the thread count.
pub fn crossfit_with<F: Scalar, L: Learner<F> + ?Sized>(
    data: &Dataset<F>,
    grid: &ThresholdGrid<F>,
    folds: &FoldAssignment,
    learner: &L,
    master_seed: u64,
) -> Result<NuisanceTensor<F>> {
    let n = data.len();
    if folds.len() != n {
        return Err(Error::AlignmentMismatch(format!("fold assignment covers {} units, dataset has {n}", folds.len())));
    }
    let k = data.num_arms();
    let num_folds = folds.num_folds();
    let fold_of = folds.fold_of();
    let arms = data.arms();

    let mut jobs = Vec::with_capacity(num_folds * k);
    for l in 0..num_folds {
        for w in 0..k {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != l && arms[i] == w).collect();
            if train.is_empty() {
                return Err(Error::EmptyTrainingCell {
                    fold: l + 1,
                    arm: data.arm_labels()[w].clone(),
                });
            }
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == l).collect();
            jobs.push((l, w, train, test));
        }
    }

    let x = data.covariates();
    let y = data.outcomes();
    let results: Vec<Result<Vec<Array1<F>>>> = jobs
        .par_iter()
        .map(|(l, w, train, test)| {
            let x_train = x.select(Axis(0), train);
            let x_test = x.select(Axis(0), test);
            let labels: Vec<Array1<F>> = grid
                .values()
                .iter()
                .map(|&t| train.iter().map(|&i| if y[i] <= t { F::one() } else { F::zero() }).collect())
                .collect();
            let seeds: Vec<u64> = (0..grid.len()).map(|g| derive_seed(master_seed, &[*l as u64, *w as u64, g as u64])).collect();
            let models = learner.fit_many(x_train.view(), &labels, &seeds)?;
            models.iter().map(|m| m.predict_proba(x_test.view())).collect()
        })
        .collect();

    let mut predictions = Array3::from_elem((n, grid.len(), k), F::nan());
    for ((_, w, _, test), res) in jobs.iter().zip(results) {
        let preds = res?;
        for (g, p) in preds.iter().enumerate() {
            for (&i, &v) in test.iter().zip(p.iter()) {
                predictions[[i, g, *w]] = v;
            }
        }
    }
    Ok(NuisanceTensor {
        predictions,
        folds: Some(folds.clone()),
        learner: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2, ArrayView1, ArrayView2};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn six_units() -> Dataset<f64> {
        Dataset::from_parts(
            array![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0, 0, 0, 1, 1, 1],
            Array2::zeros((6, 0)),
            2,
        )
        .unwrap()
    }

    #[test]
    fn intercept_only_learner_averages_other_fold() {
        let data = six_units();
        let folds = FoldAssignment::from_vec(vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        let grid = ThresholdGrid::new(vec![2.0, 4.5]).unwrap();
        let t = crossfit_nuisance(&data, &grid, &folds, &LearnerSpec::linear()).unwrap();
        let p = t.predictions();
        // unit 0 (fold 0): arm 0 trained on unit 1 (y=2) only; arm 1 on units 3, 5 (y=4, 6)
        assert_eq!(p[[0, 0, 0]], 1.0);
        assert_eq!(p[[0, 1, 1]], 0.5);
        assert_eq!(p[[0, 0, 1]], 0.0);
        // unit 1 (fold 1): arm 0 trained on units 0, 2 (y=1, 3); arm 1 on unit 4 (y=5)
        assert_eq!(p[[1, 0, 0]], 0.5);
        assert_eq!(p[[1, 1, 1]], 0.0);
        assert_eq!(p[[3, 0, 0]], 0.5);
    }

    #[test]
    fn grid_above_support_gives_ones() {
        let data = six_units();
        let folds = FoldAssignment::from_vec(vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        let grid = ThresholdGrid::new(vec![100.0]).unwrap();
        let t = crossfit_nuisance(&data, &grid, &folds, &LearnerSpec::linear()).unwrap();
        assert!(t.predictions().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_training_cell_names_fold_and_arm() {
        let data = six_units();
        // fold 0 holds every arm-1 unit, so the complement of fold 0 has none
        let folds = FoldAssignment::from_vec(vec![1, 1, 1, 0, 0, 0], 2).unwrap();
        let grid = ThresholdGrid::new(vec![3.0]).unwrap();
        let err = crossfit_nuisance(&data, &grid, &folds, &LearnerSpec::linear()).unwrap_err();
        match err {
            Error::EmptyTrainingCell { fold, arm } => {
                assert_eq!(fold, 1);
                assert_eq!(arm, "2");
            }
            e => panic!("unexpected {e}"),
        }
    }

    struct Counting(AtomicUsize);

    impl Learner<f64> for Counting {
        fn fit(&self, x: ArrayView2<'_, f64>, labels: ArrayView1<'_, f64>, seed: u64) -> Result<crate::learners::NuisanceModel<f64>> {
            self.0.fetch_add(1, Ordering::SeqCst);
            LearnerSpec::linear().fit(x, labels, seed)
        }
    }

    #[test]
    fn one_fit_per_fold_arm_threshold() {
        let data = six_units();
        let folds = FoldAssignment::from_vec(vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        let grid = ThresholdGrid::new(vec![1.5, 3.5, 5.5]).unwrap();
        let counter = Counting(AtomicUsize::new(0));
        crossfit_with(&data, &grid, &folds, &counter, 0).unwrap();
        assert_eq!(counter.0.load(Ordering::SeqCst), 2 * 2 * 3);
    }
}

//! Experiment tables, threshold grids and fold assignments.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from;

/// Column-addressed table as read from disk, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable<F> {
    pub outcome: Vec<F>,
    pub arm: Vec<String>,
    pub covariate_names: Vec<String>,
    /// One vector per covariate column.
    pub covariates: Vec<Vec<F>>,
    /// Number of arms the caller expects, if known.
    pub declared_arms: Option<usize>,
}

/// A validated randomized-experiment sample.
///
/// Arms are stored as contiguous 0-based indices; `arm_labels[k]` is the
/// original label of arm `k` (reported as arm `k + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    outcomes: Array1<F>,
    arms: Vec<usize>,
    covariates: Array2<F>,
    covariate_names: Vec<String>,
    arm_labels: Vec<String>,
    arm_counts: Vec<usize>,
}

fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => labels.sort_by(|a, b| {
            let x: f64 = a.trim().parse().unwrap();
            let y: f64 = b.trim().parse().unwrap();
            x.total_cmp(&y)
        }),
        None => labels.sort(),
    }
}

/// Validates a raw table into a [`Dataset`], remapping arm labels to `0..K`.
pub fn validate_dataset<F: Scalar>(raw: &RawTable<F>) -> Result<Dataset<F>> {
    let n = raw.outcome.len();
    if raw.arm.len() != n {
        return Err(Error::LengthMismatch {
            what: "arm column".into(),
            expected: n,
            got: raw.arm.len(),
        });
    }
    if raw.covariate_names.len() != raw.covariates.len() {
        return Err(Error::LengthMismatch {
            what: "covariate names".into(),
            expected: raw.covariates.len(),
            got: raw.covariate_names.len(),
        });
    }
    for (name, col) in raw.covariate_names.iter().zip(&raw.covariates) {
        if col.len() != n {
            return Err(Error::LengthMismatch {
                what: format!("covariate `{name}`"),
                expected: n,
                got: col.len(),
            });
        }
    }
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    if let Some(row) = raw.outcome.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            column: "y".into(),
            row,
        });
    }
    for (name, col) in raw.covariate_names.iter().zip(&raw.covariates) {
        if let Some(row) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                column: name.clone(),
                row,
            });
        }
    }

    let mut labels: Vec<String> = raw.arm.iter().map(|s| s.trim().to_string()).collect();
    sort_labels(&mut labels);
    labels.dedup();
    if let Some(k) = raw.declared_arms {
        if labels.len() < k {
            return Err(Error::EmptyArm {
                arm: format!("{} of {k}", labels.len() + 1),
            });
        }
        if labels.len() > k {
            return Err(Error::ArmCountMismatch {
                declared: k,
                found: labels.len(),
            });
        }
    }
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
    let arms: Vec<usize> = raw.arm.iter().map(|l| index[l.trim()]).collect();
    let mut arm_counts = vec![0usize; labels.len()];
    for &a in &arms {
        arm_counts[a] += 1;
    }

    let d = raw.covariates.len();
    let covariates = Array2::from_shape_fn((n, d), |(i, j)| raw.covariates[j][i]);
    Ok(Dataset {
        outcomes: Array1::from(raw.outcome.clone()),
        arms,
        covariates,
        covariate_names: raw.covariate_names.clone(),
        arm_labels: labels,
        arm_counts,
    })
}

impl<F: Scalar> Dataset<F> {
    /// Builds a dataset from already-indexed arms `0..num_arms`.
    pub fn from_parts(outcomes: Array1<F>, arms: Vec<usize>, covariates: Array2<F>, num_arms: usize) -> Result<Self> {
        let n = outcomes.len();
        if arms.len() != n || covariates.nrows() != n {
            return Err(Error::LengthMismatch {
                what: "dataset columns".into(),
                expected: n,
                got: if arms.len() != n { arms.len() } else { covariates.nrows() },
            });
        }
        let raw = RawTable {
            outcome: outcomes.to_vec(),
            arm: arms.iter().map(|a| (a + 1).to_string()).collect(),
            covariate_names: (1..=covariates.ncols()).map(|j| format!("x{j}")).collect(),
            covariates: covariates.axis_iter(Axis(1)).map(|c| c.to_vec()).collect(),
            declared_arms: Some(num_arms),
        };
        validate_dataset(&raw)
    }

    /// Inverse of [`validate_dataset`], using the original labels.
    pub fn to_raw(&self) -> RawTable<F> {
        RawTable {
            outcome: self.outcomes.to_vec(),
            arm: self.arms.iter().map(|&a| self.arm_labels[a].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.axis_iter(Axis(1)).map(|c| c.to_vec()).collect(),
            declared_arms: Some(self.num_arms()),
        }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn num_arms(&self) -> usize {
        self.arm_counts.len()
    }

    pub fn num_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn outcomes(&self) -> ArrayView1<'_, F> {
        self.outcomes.view()
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn covariates(&self) -> ArrayView2<'_, F> {
        self.covariates.view()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn arm_labels(&self) -> &[String] {
        &self.arm_labels
    }

    pub fn arm_counts(&self) -> &[usize] {
        &self.arm_counts
    }

    /// Empirical share `n_w / n` of each arm.
    pub fn arm_shares(&self) -> Vec<F> {
        let n = F::of_usize(self.len());
        self.arm_counts.iter().map(|&c| F::of_usize(c) / n).collect()
    }

    /// Looks up the arm index for an original label.
    pub fn arm_index(&self, label: &str) -> Option<usize> {
        self.arm_labels.iter().position(|l| l == label.trim())
    }

    /// Returns a copy with units reordered so that new row `r` is old row `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let outcomes = order.iter().map(|&i| self.outcomes[i]).collect();
        let arms = order.iter().map(|&i| self.arms[i]).collect();
        let covariates = self.covariates.select(Axis(0), order);
        Dataset {
            outcomes,
            arms,
            covariates,
            covariate_names: self.covariate_names.clone(),
            arm_labels: self.arm_labels.clone(),
            arm_counts: self.arm_counts.clone(),
        }
    }

    /// Replaces the outcome of one unit (used in leakage tests and sensitivity checks).
    pub fn with_outcome(&self, unit: usize, value: F) -> Self {
        let mut out = self.clone();
        out.outcomes[unit] = value;
        out
    }
}

/// Reads a CSV with columns `y`, `w` and any number of covariates.
pub fn read_csv<F: Scalar>(path: impl AsRef<Path>) -> Result<RawTable<F>> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file)
}

pub fn read_csv_from<F: Scalar, R: std::io::Read>(reader: R) -> Result<RawTable<F>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_col = headers.iter().position(|h| h == "y").ok_or_else(|| Error::MissingColumn("y".into()))?;
    let w_col = headers.iter().position(|h| h == "w").ok_or_else(|| Error::MissingColumn("w".into()))?;
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != y_col && c != w_col).collect();

    let mut outcome = Vec::new();
    let mut arm = Vec::new();
    let mut covariates = vec![Vec::new(); cov_cols.len()];
    let parse = |s: &str, column: &str, row: usize| -> Result<F> {
        s.parse::<f64>().map(F::lit).map_err(|_| Error::Parse {
            column: column.to_string(),
            row,
            value: s.to_string(),
        })
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        outcome.push(parse(&rec[y_col], "y", row)?);
        arm.push(rec[w_col].to_string());
        for (k, &c) in cov_cols.iter().enumerate() {
            covariates[k].push(parse(&rec[c], &headers[c], row)?);
        }
    }
    Ok(RawTable {
        outcome,
        arm,
        covariate_names: cov_cols.iter().map(|&c| headers[c].clone()).collect(),
        covariates,
        declared_arms: None,
    })
}

/// Finite, strictly increasing set of outcome thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdGrid<F> {
    values: Vec<F>,
}

impl<F: Scalar> ThresholdGrid<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnorderedGrid);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position of a value on the grid, allowing a small relative tolerance.
    pub fn position(&self, value: F) -> Option<usize> {
        let tol = F::lit(1e-9) * (F::one() + value.abs());
        self.values.iter().position(|&v| (v - value).abs() <= tol)
    }

    /// Largest gap between consecutive grid points (zero for a singleton).
    pub fn max_spacing(&self) -> F {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(F::zero(), F::max)
    }
}

/// How to build a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridSpec {
    /// Explicit values; sorted and deduplicated.
    Explicit { values: Vec<f64> },
    /// `count` pooled-outcome quantiles at levels `k / (count + 1)`.
    Quantiles { count: usize },
    /// Integers `lo..=hi`.
    Range { lo: i64, hi: i64 },
}

/// Lower-type empirical quantile of already sorted data: `sorted[floor(p (m - 1))]`.
pub fn lower_quantile<F: Scalar>(sorted: &[F], p: f64) -> F {
    let m = sorted.len();
    let idx = ((p * (m - 1) as f64).floor() as usize).min(m - 1);
    sorted[idx]
}

pub fn make_threshold_grid<F: Scalar>(spec: &GridSpec, outcomes: Option<ArrayView1<'_, F>>) -> Result<ThresholdGrid<F>> {
    let mut values: Vec<F> = match spec {
        GridSpec::Explicit { values } => values.iter().map(|&v| F::lit(v)).collect(),
        GridSpec::Quantiles { count } => {
            let outcomes = outcomes.ok_or_else(|| Error::Config("quantile grid needs outcome data".into()))?;
            if *count == 0 || outcomes.is_empty() {
                return Err(Error::EmptyGrid);
            }
            let mut sorted = outcomes.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite outcomes"));
            (1..=*count)
                .map(|k| lower_quantile(&sorted, k as f64 / (*count + 1) as f64))
                .collect()
        }
        GridSpec::Range { lo, hi } => {
            if hi < lo {
                return Err(Error::EmptyGrid);
            }
            (*lo..=*hi).map(|v| F::lit(v as f64)).collect()
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnorderedGrid);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    ThresholdGrid::new(values)
}

/// Random partition of `0..n` into `L` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    num_folds: usize,
    seed: u64,
}

pub fn assign_folds(n: usize, num_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if num_folds < 2 || num_folds > n {
        return Err(Error::BadFoldCount { n, folds: num_folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let mut fold_of = vec![0; n];
    // position p of the permutation goes to fold p mod L
    for (p, &unit) in order.iter().enumerate() {
        fold_of[unit] = p % num_folds;
    }
    Ok(FoldAssignment { fold_of, num_folds, seed })
}

impl FoldAssignment {
    /// Explicit assignment, e.g. to keep per-unit folds fixed under a permutation.
    pub fn from_vec(fold_of: Vec<usize>, num_folds: usize) -> Result<Self> {
        if num_folds < 2 || fold_of.iter().any(|&f| f >= num_folds) {
            return Err(Error::BadFoldCount {
                n: fold_of.len(),
                folds: num_folds,
            });
        }
        Ok(Self { fold_of, num_folds, seed: 0 })
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn num_folds(&self) -> usize {
        self.num_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_folds];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            fold_of: order.iter().map(|&i| self.fold_of[i]).collect(),
            num_folds: self.num_folds,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(arms: &[&str], y: &[f64]) -> RawTable<f64> {
        RawTable {
            outcome: y.to_vec(),
            arm: arms.iter().map(|s| s.to_string()).collect(),
            covariate_names: vec!["x".into()],
            covariates: vec![(0..y.len()).map(|i| i as f64).collect()],
            declared_arms: None,
        }
    }

    #[test]
    fn four_rows_two_arms() {
        let d = validate_dataset(&raw(&["1", "1", "2", "2"], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(d.num_arms(), 2);
        assert_eq!(d.arm_shares(), vec![0.5, 0.5]);
        assert_eq!(d.arms(), &[0, 0, 1, 1]);
    }

    #[test]
    fn declared_arm_missing_is_empty_arm() {
        let mut r = raw(&["1", "1", "1"], &[1.0, 2.0, 3.0]);
        r.declared_arms = Some(2);
        assert!(matches!(validate_dataset(&r), Err(Error::EmptyArm { .. })));
    }

    #[test]
    fn nan_outcome_rejected() {
        let r = raw(&["1", "2"], &[1.0, f64::NAN]);
        assert!(matches!(validate_dataset(&r), Err(Error::NonFiniteValue { row: 1, .. })));
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut r = raw(&["1", "2"], &[1.0, 2.0]);
        r.arm.push("1".into());
        assert!(matches!(validate_dataset(&r), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn labels_are_remapped_in_numeric_order() {
        let d = validate_dataset(&raw(&["10", "2", "10", "2"], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(d.arm_labels(), &["2".to_string(), "10".to_string()]);
        assert_eq!(d.arms(), &[1, 0, 1, 0]);
        assert_eq!(d.arm_index("10"), Some(1));
    }

    #[test]
    fn csv_reader_takes_remaining_columns_as_covariates() {
        let text = "x1,y,w,x2\n0.5,1.0,a,2\n0.25,2.0,b,3\n";
        let r: RawTable<f64> = read_csv_from(text.as_bytes()).unwrap();
        assert_eq!(r.covariate_names, vec!["x1", "x2"]);
        assert_eq!(r.outcome, vec![1.0, 2.0]);
        assert_eq!(r.covariates[1], vec![2.0, 3.0]);
        let missing: Result<RawTable<f64>> = read_csv_from("y,x\n1,2\n".as_bytes());
        assert!(matches!(missing, Err(Error::MissingColumn(c)) if c == "w"));
    }

    #[test]
    fn grid_specs() {
        let g: ThresholdGrid<f64> = make_threshold_grid(&GridSpec::Range { lo: 0, hi: 200 }, None).unwrap();
        assert_eq!(g.len(), 201);
        let g: ThresholdGrid<f64> = make_threshold_grid(&GridSpec::Explicit { values: vec![5.0] }, None).unwrap();
        assert_eq!(g.values(), &[5.0]);
        let y: Array1<f64> = (1..=99).map(|v| v as f64).collect();
        let g = make_threshold_grid(&GridSpec::Quantiles { count: 9 }, Some(y.view())).unwrap();
        // lower quantile of 1..=99 at k/10 is element floor(k * 9.8)
        assert_eq!(g.values(), &[10.0, 20.0, 30.0, 40.0, 50.0, 59.0, 69.0, 79.0, 89.0]);
        let ties = Array1::from(vec![1.0, 1.0, 1.0, 1.0, 2.0]);
        let g = make_threshold_grid(&GridSpec::Quantiles { count: 3 }, Some(ties.view())).unwrap();
        assert_eq!(g.values(), &[1.0]);
        let e: Result<ThresholdGrid<f64>> = make_threshold_grid(&GridSpec::Explicit { values: vec![] }, None);
        assert!(matches!(e, Err(Error::EmptyGrid)));
    }

    #[test]
    fn fold_examples() {
        let f = assign_folds(10, 5, 1).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let mut s = assign_folds(10, 3, 1).unwrap().sizes();
        s.sort();
        assert_eq!(s, vec![3, 3, 4]);
        assert_eq!(assign_folds(10, 3, 9).unwrap(), assign_folds(10, 3, 9).unwrap());
        assert!(matches!(assign_folds(10, 1, 0), Err(Error::BadFoldCount { .. })));
        assert!(matches!(assign_folds(3, 4, 0), Err(Error::BadFoldCount { .. })));
    }

    proptest! {
        #[test]
        fn fold_sizes_balanced(n in 2usize..300, l in 2usize..20, seed in any::<u64>()) {
            prop_assume!(l <= n);
            let s = assign_folds(n, l, seed).unwrap().sizes();
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            prop_assert_eq!(s.iter().sum::<usize>(), n);
        }

        #[test]
        fn validation_is_idempotent_and_shares_sum_to_one(
            rows in proptest::collection::vec((0u8..4, -5.0f64..5.0, -1.0f64..1.0), 2..60)
        ) {
            let r = RawTable {
                outcome: rows.iter().map(|r| r.1).collect(),
                arm: rows.iter().map(|r| r.0.to_string()).collect(),
                covariate_names: vec!["x".into()],
                covariates: vec![rows.iter().map(|r| r.2).collect()],
                declared_arms: None,
            };
            let d = validate_dataset(&r).unwrap();
            let again = validate_dataset(&d.to_raw()).unwrap();
            prop_assert_eq!(&d, &again);
            let total: f64 = d.arm_shares().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert_eq!(d.arm_counts().iter().sum::<usize>(), d.len());
        }
    }
}

//! Per-arm empirical distribution functions (the unadjusted baseline).

use ndarray::Array2;

use crate::data::{Dataset, ThresholdGrid};
use crate::scalar::Scalar;

/// `values[[g, w]]` is the fraction of arm-`w` outcomes `<= grid[g]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleCdf<F> {
    pub values: Array2<F>,
}

pub fn empirical_cdf<F: Scalar>(data: &Dataset<F>, grid: &ThresholdGrid<F>) -> SimpleCdf<F> {
    let k = data.num_arms();
    let mut per_arm: Vec<Vec<F>> = vec![Vec::new(); k];
    for (&y, &w) in data.outcomes().iter().zip(data.arms()) {
        per_arm[w].push(y);
    }
    for ys in &mut per_arm {
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let mut values = Array2::zeros((grid.len(), k));
    for (w, ys) in per_arm.iter().enumerate() {
        let nw = F::of_usize(ys.len());
        for (g, &t) in grid.values().iter().enumerate() {
            let count = ys.partition_point(|&y| y <= t);
            values[[g, w]] = F::of_usize(count) / nw;
        }
    }
    SimpleCdf { values }
}

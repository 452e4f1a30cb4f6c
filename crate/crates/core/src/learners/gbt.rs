//! Gradient-boosted regression trees on the logistic loss.
//!
//! Trees are grown level by level with exact greedy splits found from
//! per-feature presorted orders. Leaf values are regularised Newton steps
//! `-G / (H + reg_lambda)` on the log-odds scale.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_labels, sigmoid, ModelKind, NuisanceModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Row fraction drawn without replacement for each round.
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    /// Minimum Hessian mass in a child.
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            subsample: 1.0,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidHyperparameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate", "must lie in (0, 1]");
        }
        if !(1..=3).contains(&self.max_depth) {
            return bad("max_depth", "must be 1, 2 or 3");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample", "must lie in (0, 1]");
        }
        if !(self.reg_lambda >= 0.0) || !(self.min_child_weight >= 0.0) {
            return bad("reg_lambda", "regularisation must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node<F> {
    Leaf(F),
    Split { feature: usize, threshold: F, left: usize, right: usize },
}

/// A fitted regression tree; rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tree<F> {
    pub fn predict_row(&self, row: ArrayView1<'_, F>) -> F {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Clone, Copy)]
struct Best<F> {
    gain: F,
    feature: usize,
    threshold: F,
}

/// Row order of every feature with the values laid out in that order.
pub(crate) struct Presorted<F> {
    idx: Vec<Vec<usize>>,
    vals: Vec<Vec<F>>,
}

impl<F: Scalar> Presorted<F> {
    fn new(x: ArrayView2<'_, F>) -> Self {
        let (m, d) = x.dim();
        let idx: Vec<Vec<usize>> = (0..d)
            .map(|j| {
                let mut idx: Vec<usize> = (0..m).collect();
                idx.sort_by(|&a, &b| x[[a, j]].partial_cmp(&x[[b, j]]).expect("finite features"));
                idx
            })
            .collect();
        let vals = idx.iter().enumerate().map(|(j, o)| o.iter().map(|&i| x[[i, j]]).collect()).collect();
        Presorted { idx, vals }
    }
}

fn grow_tree<F: Scalar>(
    p: &GbtParams,
    x: ArrayView2<'_, F>,
    sorted: &Presorted<F>,
    in_sample: &[bool],
    grad: &[F],
    hess: &[F],
) -> Tree<F> {
    let m = x.nrows();
    let d = x.ncols();
    let lambda = F::lit(p.reg_lambda);
    let min_w = F::lit(p.min_child_weight);
    let score = |g: F, h: F| g * g / (h + lambda);

    // node index per row; usize::MAX marks rows out of the sample or in a finished leaf
    let mut node_of: Vec<usize> = (0..m).map(|i| if in_sample[i] { 0 } else { usize::MAX }).collect();
    let mut nodes: Vec<Node<F>> = vec![Node::Leaf(F::zero())];
    let mut frontier: Vec<usize> = vec![0];

    let stats = |rows: &mut dyn Iterator<Item = usize>| {
        rows.fold((F::zero(), F::zero()), |(g, h), i| (g + grad[i], h + hess[i]))
    };
    let (g0, h0) = stats(&mut (0..m).filter(|&i| in_sample[i]));
    let mut totals: Vec<(F, F)> = vec![(g0, h0)];

    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &n) in frontier.iter().enumerate() {
            slot[n] = s;
        }
        let nf = frontier.len();
        let mut best: Vec<Option<Best<F>>> = vec![None; nf];
        let mut left_g = vec![F::zero(); nf];
        let mut left_h = vec![F::zero(); nf];
        let mut last: Vec<Option<F>> = vec![None; nf];
        for j in 0..d {
            left_g.fill(F::zero());
            left_h.fill(F::zero());
            last.fill(None);
            for (&i, &v) in sorted.idx[j].iter().zip(&sorted.vals[j]) {
                let node = node_of[i];
                if node == usize::MAX {
                    continue;
                }
                let s = slot[node];
                if let Some(prev) = last[s] {
                    if v > prev {
                        let (gt, ht) = totals[s];
                        let (gl, hl) = (left_g[s], left_h[s]);
                        let (gr, hr) = (gt - gl, ht - hl);
                        if hl >= min_w && hr >= min_w {
                            let gain = score(gl, hl) + score(gr, hr) - score(gt, ht);
                            if gain > F::zero() && best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Best {
                                    gain,
                                    feature: j,
                                    threshold: (prev + v) / F::lit(2.0),
                                });
                            }
                        }
                    }
                }
                left_g[s] = left_g[s] + grad[i];
                left_h[s] = left_h[s] + hess[i];
                last[s] = Some(v);
            }
        }
        let mut next_frontier = Vec::new();
        let mut next_totals = Vec::new();
        for (s, &node) in frontier.iter().enumerate() {
            if let Some(b) = best[s] {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf(F::zero()));
                nodes.push(Node::Leaf(F::zero()));
                nodes[node] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
                next_frontier.push(left);
                next_frontier.push(right);
            } else {
                let (g, h) = totals[s];
                nodes[node] = Node::Leaf(-g / (h + lambda));
            }
        }
        // route rows and accumulate child totals
        let mut child_tot = vec![(F::zero(), F::zero()); nodes.len()];
        for i in 0..m {
            let node = node_of[i];
            if node == usize::MAX {
                continue;
            }
            match nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let c = if x[[i, feature]] < threshold { left } else { right };
                    node_of[i] = c;
                    let t = &mut child_tot[c];
                    t.0 = t.0 + grad[i];
                    t.1 = t.1 + hess[i];
                }
                Node::Leaf(_) => node_of[i] = usize::MAX,
            }
        }
        for &c in &next_frontier {
            next_totals.push(child_tot[c]);
        }
        frontier = next_frontier;
        totals = next_totals;
    }
    for (s, &node) in frontier.iter().enumerate() {
        let (g, h) = totals[s];
        nodes[node] = Node::Leaf(-g / (h + lambda));
    }
    Tree { nodes }
}

/// Mean log-loss of probabilities against labels.
pub(crate) fn log_loss<F: Scalar>(p: &[F], y: &[F]) -> F {
    let lo = F::lit(1e-6);
    let m = F::of_usize(y.len());
    -p.iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let pi = pi.max(lo).min(F::one() - lo);
            yi * pi.ln() + (F::one() - yi) * (F::one() - pi).ln()
        })
        .sum::<F>()
        / m
}

/// Fits the booster and returns the model with the training loss after each round.
pub(crate) fn fit_with_trace<F: Scalar>(
    p: &GbtParams,
    x: ArrayView2<'_, F>,
    labels: ArrayView1<'_, F>,
    seed: u64,
) -> Result<(NuisanceModel<F>, Vec<F>)> {
    p.validate()?;
    let (mean, constant) = check_labels(x, labels)?;
    if let Some(c) = constant {
        return Ok((c, vec![]));
    }
    let (m, d) = x.dim();
    let y = labels.to_vec();
    let base_score = (mean / (F::one() - mean)).ln();
    let lr = F::lit(p.learning_rate);
    let sorted = Presorted::new(x);
    let mut rng = rng_from(seed);
    let mut score = vec![base_score; m];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let mut trace = Vec::with_capacity(p.n_rounds + 1);
    let probs = |score: &[F]| score.iter().map(|&s| sigmoid(s)).collect::<Vec<F>>();
    trace.push(log_loss(&probs(&score), &y));
    let take = ((p.subsample * m as f64).round() as usize).clamp(1, m);
    for _ in 0..p.n_rounds {
        let prob = probs(&score);
        let grad: Vec<F> = prob.iter().zip(&y).map(|(&pi, &yi)| pi - yi).collect();
        let hess: Vec<F> = prob.iter().map(|&pi| pi * (F::one() - pi)).collect();
        let in_sample = if take == m {
            vec![true; m]
        } else {
            let mut mask = vec![false; m];
            for i in sample(&mut rng, m, take) {
                mask[i] = true;
            }
            mask
        };
        let tree = grow_tree(p, x, &sorted, &in_sample, &grad, &hess);
        for (i, s) in score.iter_mut().enumerate() {
            *s = *s + lr * tree.predict_row(x.row(i));
        }
        trees.push(tree);
        trace.push(log_loss(&probs(&score), &y));
    }
    let model = NuisanceModel::new(
        d,
        ModelKind::Trees {
            base_rate: mean,
            base_score,
            learning_rate: lr,
            trees,
        },
    );
    Ok((model, trace))
}

pub(crate) fn fit<F: Scalar>(p: &GbtParams, x: ArrayView2<'_, F>, labels: ArrayView1<'_, F>, seed: u64) -> Result<NuisanceModel<F>> {
    fit_with_trace(p, x, labels, seed).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Learner, LearnerSpec};
    use ndarray::{array, Array1, Array2};
    use rand::Rng;

    fn step_data(m: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = rng_from(seed);
        let x = Array2::from_shape_fn((m, 3), |_| rng.gen::<f64>());
        let y = (0..m)
            .map(|i| {
                let p = if x[[i, 0]] > 0.5 { 0.9 } else { 0.2 };
                (rng.gen::<f64>() < p) as u8 as f64
            })
            .collect();
        (x, y)
    }

    #[test]
    fn zero_rounds_predict_base_rate() {
        let (x, y) = step_data(50, 1);
        let spec = LearnerSpec::gbt(GbtParams {
            n_rounds: 0,
            ..Default::default()
        });
        let p = spec.fit(x.view(), y.view(), 0).unwrap().predict_proba(x.view()).unwrap();
        let base = y.mean().unwrap();
        assert!(p.iter().all(|&v| v == base));
    }

    #[test]
    fn training_loss_non_increasing() {
        let (x, y) = step_data(300, 2);
        for lr in [0.1, 0.05] {
            let p = GbtParams {
                learning_rate: lr,
                n_rounds: 60,
                ..Default::default()
            };
            let (_, trace) = fit_with_trace(&p, x.view(), y.view(), 0).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            assert!(trace.last().unwrap() < &trace[0]);
        }
    }

    #[test]
    fn learns_step_function() {
        let (x, y) = step_data(2000, 3);
        let m = LearnerSpec::gbt(GbtParams::default()).fit(x.view(), y.view(), 0).unwrap();
        let p = m.predict_proba(array![[0.9, 0.5, 0.5], [0.1, 0.5, 0.5]].view()).unwrap();
        assert!((p[0] - 0.9).abs() < 0.07, "{p}");
        assert!((p[1] - 0.2).abs() < 0.07, "{p}");
    }

    #[test]
    fn depth_bounds_leaves_and_subsample_is_seeded() {
        let (x, y) = step_data(200, 4);
        let p = GbtParams {
            subsample: 0.5,
            n_rounds: 5,
            ..Default::default()
        };
        let (a, _) = fit_with_trace(&p, x.view(), y.view(), 7).unwrap();
        let (b, _) = fit_with_trace(&p, x.view(), y.view(), 7).unwrap();
        assert_eq!(a, b);
        if let ModelKind::Trees { trees, .. } = a.kind() {
            assert!(trees.iter().all(|t| t.num_leaves() <= 8));
        }
    }
}

//! Synthetic randomized experiment with a location-shift treatment effect.
//!
//! `X ~ U(0,1)^d`, `W ~ Bernoulli(rho)` and
//! `Y = W + sum_j beta_j X_j + sum_j gamma_j X_j^2 + noise_sd * U` with `U ~ N(0, 1)`.
//! Treated units (`W = 1`) get arm index 1 (label "2"), controls arm index 0.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::crossfit::NuisanceTensor;
use crate::data::{lower_quantile, Dataset, ThresholdGrid};
use crate::error::{Error, Result};
use crate::scalar::{kahan_sum, Scalar};
use crate::seed::{derive_seed, rng_from};

/// Units drawn from one RNG stream; a sample of size `n` is the prefix of any larger one.
const CHUNK: usize = 4096;

/// Number of leading covariates that enter the outcome by default.
pub const RELEVANT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub d_x: usize,
    pub n: usize,
    pub treat_prob: f64,
    /// Linear coefficients; defaults to 1 on the first 50 covariates.
    pub beta: Option<Vec<f64>>,
    /// Quadratic coefficients; defaults to 1 on the first 50 covariates.
    pub gamma2: Option<Vec<f64>>,
    pub noise_sd: f64,
    /// Sets both coefficient vectors to `2 / s` on the first 50 covariates.
    pub relevance_s: Option<u32>,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            d_x: 100,
            n: 1000,
            treat_prob: 0.5,
            beta: None,
            gamma2: None,
            noise_sd: 1.0,
            relevance_s: None,
            seed: 0,
        }
    }
}

pub fn kappa(s: u32) -> f64 {
    2.0 / s as f64
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Err(Error::InvalidHyperparameter { name: name.into(), reason: reason.into() });
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return bad("treat_prob", "must lie in (0, 1)");
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd", "must be positive");
        }
        if self.n < 2 {
            return bad("n", "must be at least 2");
        }
        if self.relevance_s == Some(0) {
            return bad("relevance_s", "must be at least 1");
        }
        for (name, v) in [("beta", &self.beta), ("gamma2", &self.gamma2)] {
            if let Some(v) = v {
                if v.len() != self.d_x {
                    return bad(name, "length must equal d_x");
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return bad(name, "coefficients must be finite");
                }
            }
        }
        Ok(())
    }

    /// Effective `(beta, gamma2)`.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let level = self.relevance_s.map_or(1.0, kappa);
        let default: Vec<f64> = (0..self.d_x).map(|j| if j < RELEVANT { level } else { 0.0 }).collect();
        (
            self.beta.clone().unwrap_or_else(|| default.clone()),
            self.gamma2.clone().unwrap_or(default),
        )
    }

    /// Covariate part `g(x) = sum beta_j x_j + gamma_j x_j^2`.
    pub fn signal(&self) -> Signal {
        let (beta, gamma2) = self.coefficients();
        Signal { beta, gamma2 }
    }
}

#[derive(Debug, Clone)]
pub struct Signal {
    beta: Vec<f64>,
    gamma2: Vec<f64>,
}

impl Signal {
    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.beta.iter().zip(&self.gamma2))
            .map(|(&v, (&b, &c))| b * v + c * v * v)
            .sum()
    }
}

/// One simulated unit with both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub x: Vec<f64>,
    pub treated: bool,
    /// `g(x) + noise`, the outcome without treatment.
    pub y0: f64,
}

impl Unit {
    pub fn y1(&self) -> f64 {
        self.y0 + 1.0
    }

    pub fn observed(&self) -> f64 {
        if self.treated {
            self.y1()
        } else {
            self.y0
        }
    }
}

/// Streams units chunk by chunk in index order.
fn for_each_chunk<T: Send>(cfg: &DgpConfig, n: usize, seed: u64, signal: &Signal, visit: impl Fn(Unit) -> T + Sync) -> Vec<T> {
    let chunks = n.div_ceil(CHUNK);
    let out: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from(derive_seed(seed, &[c as u64]));
            let hi = ((c + 1) * CHUNK).min(n);
            (c * CHUNK..hi)
                .map(|_| {
                    let x: Vec<f64> = (0..cfg.d_x).map(|_| rng.gen::<f64>()).collect();
                    let treated = rng.gen::<f64>() < cfg.treat_prob;
                    let u: f64 = rng.sample(StandardNormal);
                    let y0 = signal.eval(&x) + cfg.noise_sd * u;
                    visit(Unit { x, treated, y0 })
                })
                .collect()
        })
        .collect();
    out.into_iter().flatten().collect()
}

/// Full units including the unobserved potential outcome.
pub fn simulate_units(cfg: &DgpConfig, n: usize, seed: u64) -> Vec<Unit> {
    for_each_chunk(cfg, n, seed, &cfg.signal(), |u| u)
}

/// Observed dataset of size `cfg.n` from `cfg.seed`.
pub fn generate_dgp<F: Scalar>(cfg: &DgpConfig) -> Result<Dataset<F>> {
    cfg.validate()?;
    let units = simulate_units(cfg, cfg.n, cfg.seed);
    let y = Array1::from_iter(units.iter().map(|u| F::lit(u.observed())));
    let arms = units.iter().map(|u| u.treated as usize).collect();
    let x = Array2::from_shape_fn((cfg.n, cfg.d_x), |(i, j)| F::lit(units[i].x[j]));
    Dataset::from_parts(y, arms, x, 2)
}

fn normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Exact conditional CDF `P(Y <= y | X, W = w) = Phi((y - w - g(X)) / noise_sd)`.
pub fn oracle_nuisance<F: Scalar>(cfg: &DgpConfig, data: &Dataset<F>, grid: &ThresholdGrid<F>) -> NuisanceTensor<F> {
    let signal = cfg.signal();
    let z = normal();
    let x = data.covariates();
    let g: Vec<f64> = (0..data.len())
        .map(|i| signal.eval(&x.row(i).iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()))
        .collect();
    let t: Vec<f64> = grid.values().iter().map(|v| v.to_f64_lossy()).collect();
    let gamma = Array3::from_shape_fn((data.len(), t.len(), data.num_arms()), |(i, k, w)| {
        F::lit(z.cdf((t[k] - w as f64 - g[i]) / cfg.noise_sd))
    });
    NuisanceTensor::from_array(gamma)
}

/// Population quantities approximated on a large simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub oracle_n: usize,
    pub seed: u64,
    /// Sorted untreated potential outcomes.
    y0: Vec<f64>,
    /// Sorted treated potential outcomes.
    y1: Vec<f64>,
    /// Sorted observed outcomes under the experiment's assignment.
    observed: Vec<f64>,
    /// Covariate signal per unit, for analytic cross-checks.
    signal: Vec<f64>,
    noise_sd: f64,
}

pub fn oracle_sample(cfg: &DgpConfig, oracle_n: usize, seed: u64) -> Result<OracleSample> {
    cfg.validate()?;
    if oracle_n < 100_000 {
        return Err(Error::InvalidHyperparameter {
            name: "oracle_n".into(),
            reason: "must be at least 100000".into(),
        });
    }
    let signal_fn = cfg.signal();
    let parts = for_each_chunk(cfg, oracle_n, seed, &signal_fn, |u| (u.y0, u.observed(), signal_fn.eval(&u.x)));
    let sort = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v
    };
    let signal = parts.iter().map(|p| p.2).collect();
    let y0 = sort(parts.iter().map(|p| p.0).collect());
    let y1 = y0.iter().map(|v| v + 1.0).collect();
    let observed = sort(parts.iter().map(|p| p.1).collect());
    Ok(OracleSample {
        oracle_n,
        seed,
        y0,
        y1,
        observed,
        signal,
        noise_sd: cfg.noise_sd,
    })
}

fn cdf_at(sorted: &[f64], y: f64) -> f64 {
    sorted.partition_point(|&v| v <= y) as f64 / sorted.len() as f64
}

impl OracleSample {
    /// Lower quantiles of the pooled observed outcome.
    pub fn observed_quantiles(&self, levels: &[f64]) -> Vec<f64> {
        levels.iter().map(|&p| lower_quantile(&self.observed, p)).collect()
    }

    pub fn potential_quantile(&self, treated: bool, p: f64) -> f64 {
        lower_quantile(if treated { &self.y1 } else { &self.y0 }, p)
    }

    /// `F_1(y) - F_0(y)` from the potential outcomes.
    pub fn dte(&self, thresholds: &[f64]) -> Vec<f64> {
        thresholds.iter().map(|&y| cdf_at(&self.y1, y) - cdf_at(&self.y0, y)).collect()
    }

    /// `Q_1(tau) - Q_0(tau)` from the potential outcomes.
    pub fn qte(&self, taus: &[f64]) -> Vec<f64> {
        taus.iter()
            .map(|&t| self.potential_quantile(true, t) - self.potential_quantile(false, t))
            .collect()
    }

    /// `mean_i [Phi((y - 1 - g_i)/sd) - Phi((y - g_i)/sd)]` over the oracle covariates.
    pub fn analytic_dte(&self, thresholds: &[f64]) -> Vec<f64> {
        let z = normal();
        thresholds
            .iter()
            .map(|&y| {
                let terms: Vec<f64> = self
                    .signal
                    .par_iter()
                    .map(|&g| z.cdf((y - 1.0 - g) / self.noise_sd) - z.cdf((y - g) / self.noise_sd))
                    .collect();
                kahan_sum(terms) / self.signal.len() as f64
            })
            .collect()
    }
}

use statrs::distribution::{ContinuousCDF, Normal};

use dte_core::simulation::{oracle_sample, DgpConfig};

const ORACLE_N: usize = 1_000_000;

#[test]
fn oracle_qte_is_one() {
    let cfg = DgpConfig::default();
    let o = oracle_sample(&cfg, ORACLE_N, 17).unwrap();
    let taus: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    for (t, q) in taus.iter().zip(o.qte(&taus)) {
        assert!((q - 1.0).abs() <= 0.01, "tau {t}: {q}");
    }
}

#[test]
fn sampled_and_analytic_dte_agree() {
    let cfg = DgpConfig::default();
    let o = oracle_sample(&cfg, ORACLE_N, 18).unwrap();
    let levels: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let ys = o.observed_quantiles(&levels);
    for ((y, s), a) in ys.iter().zip(o.dte(&ys)).zip(o.analytic_dte(&ys)) {
        assert!((s - a).abs() <= 0.005, "y {y}: sampled {s} analytic {a}");
        assert!(s < 0.0);
    }
}

#[test]
fn zero_signal_matches_closed_form() {
    let cfg = DgpConfig {
        beta: Some(vec![0.0; 100]),
        gamma2: Some(vec![0.0; 100]),
        ..DgpConfig::default()
    };
    let o = oracle_sample(&cfg, 100_000, 19).unwrap();
    let z = Normal::new(0.0, 1.0).unwrap();
    let ys = [-1.5, -0.5, 0.0, 0.5, 1.0, 2.0];
    for (y, a) in ys.iter().zip(o.analytic_dte(&ys)) {
        assert!((a - (z.cdf(y - 1.0) - z.cdf(*y))).abs() < 1e-12);
    }
    for (y, s) in ys.iter().zip(o.dte(&ys)) {
        assert!((s - (z.cdf(y - 1.0) - z.cdf(*y))).abs() < 0.01);
    }
}

#[test]
fn treatment_shifts_every_unit_by_one() {
    let cfg = DgpConfig::default();
    let units = dte_core::simulation::dgp::simulate_units(&cfg, 1000, 3);
    assert!(units.iter().all(|u| (u.y1() - u.y0 - 1.0).abs() < 1e-12));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dte_cli::{EstimateOutput, RunConfig, SimulateOutput};

fn dte_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dte"))
}

fn write_data(dir: &Path, n: usize, treated_cap: Option<usize>) -> PathBuf {
    let path = dir.join("data.csv");
    let mut text = String::from("y,w,x1,x2\n");
    let mut treated = 0;
    for i in 0..n {
        let x1 = ((i * 37) % 101) as f64 / 101.0;
        let x2 = ((i * 53) % 89) as f64 / 89.0;
        let mut w = i % 2;
        if w == 1 && treated_cap.is_some_and(|c| treated >= c) {
            w = 0;
        }
        treated += w;
        let noise = (((i * 7919) % 1000) as f64 / 1000.0 - 0.5) * 2.0;
        let y = w as f64 + 2.0 * x1 - x2 + noise;
        text.push_str(&format!("{y},{w},{x1},{x2}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    dte_bin().args(args).output().unwrap()
}

#[test]
fn minimal_estimate_schema() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 300, None);
    let cfg = write_config(dir.path(), "c.json", &format!(r#"{{"input": {:?}, "learner": "linear", "effects": ["dte"], "inference": "pointwise", "b_draws": 200}}"#, data));
    let out = dir.path().join("out.json");
    let res = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["grid"].as_array().unwrap().len(), 9);
    let d = &v["dte"][0];
    for key in ["estimate", "se", "boot_se", "lower", "upper"] {
        assert_eq!(d[key].as_array().unwrap().len(), 9, "{key}");
    }
    assert_eq!(d["arm"], "1");
    assert_eq!(d["control"], "0");
    assert!(v["warnings"].is_array());
}

#[test]
fn json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 300, None);
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{"input": {:?}, "effects": ["cdf", "dte", "pte", "qte"], "pte": {{"h": 1.0}}, "grid": {{"type": "range", "lo": -1, "hi": 4}}, "continuous": true, "inference": "uniform", "b_draws": 100}}"#, data),
    );
    let out = dir.path().join("out.json");
    let res = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bytes = std::fs::read(&out).unwrap();
    let parsed: EstimateOutput = serde_json::from_slice(&bytes).unwrap();
    let mut again = serde_json::to_vec_pretty(&parsed).unwrap();
    again.push(b'\n');
    assert_eq!(again, bytes);
    assert!(parsed.qte.is_some() && parsed.pte.is_some() && parsed.cdf.as_ref().unwrap().len() == 2);
}

#[test]
fn deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 400, None);
    let cfg = write_config(dir.path(), "c.json", &format!(r#"{{"input": {:?}, "learner": "gbt", "inference": "uniform", "b_draws": 200, "seed": 5}}"#, data));
    let mut outputs = Vec::new();
    for threads in ["1", "4", "4"] {
        let out = dir.path().join(format!("out{}.json", outputs.len()));
        let res = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn exit_codes_and_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 60, None);
    let out = dir.path().join("out.json");
    let out_s = out.to_str().unwrap();

    let cfg = write_config(dir.path(), "a.json", &format!(r#"{{"input": {:?}, "alpha": 2.0}}"#, data));
    assert_eq!(run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out_s]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "b.json", r#"{"input": "/nonexistent/file.csv"}"#);
    assert_eq!(run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out_s]).status.code(), Some(3));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,w,x\n1,0,0.5\n2,0,0.1\nNaN,1,0.3\n1,1,0.2\n").unwrap();
    let cfg = write_config(dir.path(), "c.json", &format!(r#"{{"input": {:?}}}"#, bad));
    assert_eq!(run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out_s]).status.code(), Some(3));

    let sparse = dir.path().join("sparse");
    std::fs::create_dir(&sparse).unwrap();
    let data = write_data(&sparse, 60, Some(1));
    let cfg = write_config(dir.path(), "d.json", &format!(r#"{{"input": {:?}, "folds": 5}}"#, data));
    let res = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out_s]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("fold") && msg.contains("arm"), "{msg}");

    let cfg = write_config(dir.path(), "e.json", &format!(r#"{{"input": {:?}, "inference": "pointwise"}}"#, data));
    let res = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out_s, "--b-draws", "5"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn discrete_outcome_skips_qte() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), 200, None);
    let cfg = write_config(dir.path(), "c.json", &format!(r#"{{"input": {:?}, "effects": ["dte", "qte"], "inference": "none"}}"#, data));
    let out = dir.path().join("out.json");
    let res = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("discrete_outcome"));
    let v: EstimateOutput = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(v.qte.is_none());
    assert!(v.warnings.iter().any(|w| w.kind == "discrete_outcome"));
}

#[test]
fn simulate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"mode": "simulate", "dgp": {"d_x": 10, "n": 300}, "mc": {"replications": 2, "estimators": ["simple", "lasso-adjusted"], "oracle_n": 100000, "lasso": {"n_lambda": 8, "cv_folds": 3}}, "seed": 3}"#,
    );
    let out = dir.path().join("metrics.json");
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("estimated runtime"));
    assert!(stderr.contains("replication 2/2"));
    let parsed: SimulateOutput = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(parsed.metrics.replications, 2);
    assert_eq!(parsed.metrics.rows.len(), 18);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "estimator,quantile,threshold,truth,bias_pct,rmse,rmse_reduction_pct");
    for row in lines {
        let cells: Vec<&str> = row.split(',').collect();
        if cells[0] == "simple" {
            assert_eq!(cells[6], "0");
        } else {
            assert!(cells[6].parse::<f64>().is_ok());
        }
    }
}

#[test]
fn full_scale_config_is_accepted() {
    let text = r#"{"mode": "simulate", "dgp": {"n": 5000}, "mc": {"replications": 1000}}"#;
    let cfg = RunConfig::from_json(text).unwrap();
    let dgp = cfg.dgp.unwrap();
    let mc = cfg.mc.unwrap();
    dgp.validate().unwrap();
    mc.validate().unwrap();
    let t = dte_core::simulation::estimate_runtime(&dgp, &mc, 8);
    assert!(t.as_secs() > 60);
}

#[test]
fn mode_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"mode": "estimate", "input": "x.csv"}"#);
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "d.json", r#"{"mode": "simulate"}"#);
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn simulate_keeps_mc_block_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        r#"{"dgp": {"d_x": 5, "n": 200}, "mc": {"replications": 1, "estimators": ["simple", "linear-adjusted"], "oracle_n": 100000, "folds": 3, "seed": 9}}"#,
    );
    let out = dir.path().join("m.json");
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let parsed: SimulateOutput = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!((parsed.mc.folds, parsed.mc.seed), (3, 9));
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--folds", "4", "--seed", "2"]);
    assert!(res.status.success());
    let parsed: SimulateOutput = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!((parsed.mc.folds, parsed.mc.seed), (4, 2));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use percolab::estimators::{Estimate, TailCurve};
use percolab_cli::config::{Estimand, ExperimentConfig, SCHEMA_ID};
use percolab_cli::record::{append, read_glob, Counters, ResultRecord, CSV_HEADER};
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_percolab"));
    c.env_remove("PERCOLAB_RESULTS_DIR");
    c
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn records(path: &Path) -> Vec<ResultRecord> {
    read_glob(path.to_str().unwrap()).unwrap().into_iter().map(|r| r.1).collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn tau_config() -> Value {
    json!({
        "$schema": SCHEMA_ID,
        "experiment_id": "tau-line",
        "estimand": "tau",
        "model": { "d": 1, "kind": "nearest-neighbor" },
        "p": 1.0,
        "x": [0],
        "y": [5],
        "trials": 50,
        "seed": 3
    })
}

#[test]
fn trivial_tau_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &tau_config());
    let out = dir.path().join("r.jsonl");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rs = records(&out);
    assert_eq!(rs.len(), 1);
    assert_eq!(rs[0].payload["mean"], json!(1.0));
    assert_eq!(rs[0].sampler, "edgehash-v1");
    assert_eq!(rs[0].counters, Counters { trials: 50, accepted: 50, truncated: 0 });
    assert_eq!(rs[0].inputs["cell"]["p"], json!(1.0));

    // Reruns append.
    bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    let rs2 = records(&out);
    assert_eq!(rs2.len(), 2);
    assert_eq!(rs2[0], rs[0]);
}

#[test]
fn results_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &tau_config());
    let root = dir.path().join("store");
    let o = bin().env("PERCOLAB_RESULTS_DIR", &root).args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(records(&root.join("tau-line.jsonl")).len(), 1);
}

#[test]
fn worker_count_does_not_change_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment_id": "pi-d2",
        "estimand": "pi",
        "model": { "d": 2, "kind": "nearest-neighbor" },
        "p_grid": [0.4, 0.5],
        "n_grid": [2, 4, 8],
        "trials": 3000,
        "seed": 11
    });
    let path = write(dir.path(), "c.json", &cfg);
    let mut payloads = vec![];
    for workers in ["1", "8"] {
        let out = dir.path().join(format!("w{workers}.jsonl"));
        let o = bin().args(["run", "--workers", workers, "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
        assert_eq!(code(&o), 0);
        let rs = records(&out);
        payloads.push(rs.iter().map(|r| (r.config_hash.clone(), serde_json::to_string(&r.payload).unwrap())).collect::<Vec<_>>());
    }
    assert_eq!(payloads[0], payloads[1]);

    // A different seed is a different experiment.
    let out = dir.path().join("seed.jsonl");
    bin().args(["run", "--seed", "12", "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    let rs = records(&out);
    assert_ne!(rs[0].config_hash, payloads[0][0].0);
    assert_eq!(rs[0].inputs["config"]["seed"], json!(12));
}

#[test]
fn line_correlation_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment_id": "xi",
        "estimand": "xi",
        "model": { "d": 1, "kind": "nearest-neighbor" },
        "p": 0.5,
        "n_grid": [3, 4, 5, 6, 7, 8, 9],
        "trials": 50000,
        "seed": 5
    });
    let path = write(dir.path(), "c.json", &cfg);
    let out = dir.path().join("r.jsonl");
    let o = bin().args(["run", "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    let r = &records(&out)[0];
    let (xi, lo, hi) = (
        r.payload["xi"].as_f64().unwrap(),
        r.payload["ci"][0].as_f64().unwrap(),
        r.payload["ci"][1].as_f64().unwrap(),
    );
    // π(n) = 2p^n - p^{2n} is not a pure exponential at small n, which
    // biases the fit upward by about 0.03 on this grid.
    let exact = 1.0 / 2f64.ln();
    assert!((xi - exact).abs() <= 3.0 * (hi - lo), "{xi} [{lo}, {hi}]");
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = tau_config();
    bad["trials"] = json!(0);
    let path = write(dir.path(), "bad.json", &bad);
    let o = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`trials`"));

    let o = bin().args(["run", "--config", "/nonexistent.json"]).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn resource_cap_flags_the_cell_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment_id": "span",
        "estimand": "spanning",
        "model": { "d": 3, "kind": "nearest-neighbor" },
        "p": 0.3,
        "n_grid": [2, 200, 3],
        "trials": 20,
        "seed": 1
    });
    let path = write(dir.path(), "c.json", &cfg);
    let out = dir.path().join("r.jsonl");
    let o = bin().args(["run", "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 2);
    let rs = records(&out);
    assert_eq!(rs.len(), 3);
    assert!(rs[0].error.is_none() && rs[2].error.is_none());
    let err = rs[1].error.as_ref().unwrap();
    assert_eq!(err.kind, "resource-cap");
    assert!(err.message.contains("20000000"), "{}", err.message);
}

#[test]
fn oracle_suite_modes() {
    let o = bin().args(["oracle-suite", "--trials", "20000"]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert!(!text.contains("FAIL"));

    let o = bin().args(["oracle-suite", "--empty-catalog"]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0);
    assert!(text.contains("VACUOUS") && text.contains("0 checks"));

    let unit = (2f64.powi(-52)).to_string();
    let o = bin().args(["oracle-suite", "--trials", "20000", "--corrupt-sampler", &unit]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 3);
    assert!(text.lines().filter(|l| l.contains("russo/")).all(|l| l.starts_with("PASS")));
    assert!(text.lines().any(|l| l.starts_with("FAIL estimator/")));
}

fn synthetic(seed: u64, ts: &[f64], slope: f64) -> ResultRecord {
    let estimates = ts
        .iter()
        .map(|t| {
            let mean = 3.0 * t.powf(slope);
            Estimate { mean, stderr: mean * 0.01, trials: 1000, accepted: 1000, truncated: 0, warnings: vec![] }
        })
        .collect();
    let curve = TailCurve { estimand: "cluster-tail".into(), abscissae: ts.to_vec(), estimates, partial: false };
    ResultRecord {
        record_type: "estimate".into(),
        config_hash: format!("synthetic-{seed}"),
        tool_version: "0".into(),
        sampler: "edgehash-v1".into(),
        estimand: "cluster-tail".into(),
        inputs: json!({ "config": { "seed": seed }, "cell": { "p": 0.1 } }),
        payload: serde_json::to_value(curve).unwrap(),
        error: None,
        wall_time_s: 0.0,
        counters: Counters::default(),
        sources: vec![],
    }
}

#[test]
fn fit_recovers_synthetic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let ts = [100.0, 300.0, 1000.0, 3000.0, 10000.0];
    append(&dir.path().join("a.jsonl"), &[synthetic(1, &ts, -0.5)]).unwrap();
    append(&dir.path().join("b.jsonl"), &[synthetic(2, &ts, -0.5)]).unwrap();
    let spec = write(dir.path(), "fit.json", &json!({ "op": "loglog", "estimand": "cluster-tail" }));
    let fits = dir.path().join("fits.jsonl");

    let mut slopes = vec![];
    for file in ["a.jsonl", "b.jsonl"] {
        let pattern = dir.path().join(file);
        let o = bin().arg("fit").arg(&pattern).arg("--config").arg(&spec).arg("--out").arg(&fits).output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for r in records(&fits) {
        assert_eq!(r.record_type, "fit");
        slopes.push(r.payload.clone());
        assert!((r.payload["slope"].as_f64().unwrap() + 0.5).abs() < 1e-9);
        assert_eq!(r.sources.len(), 1);
    }
    // Identical data from two seeds gives an identical fit.
    assert_eq!(slopes[0], slopes[1]);

    let o = bin()
        .arg("fit")
        .arg(dir.path().join("*.jsonl"))
        .arg("--config")
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("other.out"))
        .arg("--csv")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8_lossy(&o.stdout);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.next().unwrap().split(',').count(), 6);
    assert_eq!(csv.lines().count(), 1 + 2 * ts.len());
}

#[test]
fn fit_reports_what_it_found() {
    let dir = tempfile::tempdir().unwrap();
    append(&dir.path().join("a.jsonl"), &[synthetic(1, &[1.0, 2.0], -1.0)]).unwrap();
    let spec = write(dir.path(), "fit.json", &json!({ "op": "exp-rate", "estimand": "pi" }));
    let o = bin().arg("fit").arg(dir.path().join("*.jsonl")).arg("--config").arg(&spec).output().unwrap();
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("1 × estimate:cluster-tail"), "{err}");
}

#[test]
fn pc_estimate_on_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment_id": "pc-line",
        "estimand": "pc",
        "model": { "d": 1, "kind": "nearest-neighbor" },
        "n_grid": [4, 8],
        "bracket": [0.3, 1.0],
        "tolerance": 0.1,
        "trials": 4000,
        "seed": 2
    });
    let path = write(dir.path(), "c.json", &cfg);
    let out = dir.path().join("r.jsonl");
    let o = bin().args(["pc-estimate", "--config"]).arg(&path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = &records(&out)[0];
    assert_eq!(r.record_type, "pc");
    let (lo, hi) = (r.payload["bracket"][0].as_f64().unwrap(), r.payload["bracket"][1].as_f64().unwrap());
    assert!(hi - lo <= 0.1 && hi > 0.9);
}

#[test]
fn schema_matches_config_type() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/experiment-config.v1.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(schema["$id"], json!(SCHEMA_ID));
    let ids: Vec<Value> = Estimand::ALL.iter().map(|e| json!(e.id())).collect();
    assert_eq!(schema["properties"]["estimand"]["enum"], Value::Array(ids));
    for e in Estimand::ALL {
        assert_eq!(serde_json::to_value(e).unwrap(), json!(e.id()));
    }

    // Every field the config type knows is documented, and nothing else.
    let full = json!({
        "$schema": SCHEMA_ID, "experiment_id": "x", "estimand": "tau", "model": { "d": 1, "kind": "nearest-neighbor" },
        "p_grid": [0.5], "n_grid": [1], "lambda_grid": [1.0], "t_grid": [1], "x": [0], "y": [1], "region": { "shape": "full" },
        "delta": 0.1, "n_max": 2, "arm_exponent": 0.0, "bracket": [0.1, 0.2], "tolerance": 0.1, "sigmas": 2.0,
        "trials": 1, "min_accepted": 1, "budget": { "max_volume": 10 }, "seed": 0, "workers": 1
    });
    let cfg: ExperimentConfig = serde_json::from_value(full.clone()).unwrap();
    let mut keys: Vec<String> = serde_json::to_value(&cfg).unwrap().as_object().unwrap().keys().cloned().collect();
    keys.extend(["p".into(), "n".into()]);
    keys.sort();
    let mut documented: Vec<String> = schema["properties"].as_object().unwrap().keys().cloned().collect();
    documented.sort();
    assert_eq!(keys, documented);
}

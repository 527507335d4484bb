use std::path::Path;
use std::process::Command;

use grand_poincare::{emit_report, run, run_with_threads, ExperimentConfig, Format, ReportRecord, RunError};
use serde_json::json;

fn config(v: serde_json::Value) -> ExperimentConfig {
    serde_json::from_value(v).unwrap()
}

fn two_point(weights: [f64; 2]) -> serde_json::Value {
    json!({"edges": [[0, 1, 1.0]], "weights": weights})
}

fn verify_pl(kp: f64) -> ExperimentConfig {
    config(json!({
        "task": "verify-pl",
        "space": two_point([0.5, 0.5]),
        "fields": [{"kind": "values", "values": [0.0, 1.0]}, {"kind": "random", "count": 5}],
        "psi": {"kind": "power_blowup", "b": 4.0, "beta": 1.0},
        "transfer": {"s": 3.0, "kp": {"kind": "constant", "value": kp}}
    }))
}

#[test]
fn norm_of_indicator_with_spike() {
    let cfg = config(json!({
        "task": "norm",
        "space": two_point([0.25, 0.75]),
        "fields": [{"kind": "indicator", "subset": [0]}],
        "psi": {"kind": "spike", "r": 2.0}
    }));
    let rec = run(&cfg, Path::new(".")).unwrap();
    assert!((rec.body.scalars["norm"].0 - 0.5).abs() < 1e-15);
    assert!(rec.body.verdicts.is_empty());
}

#[test]
fn verify_pl_exact_and_under_supplied() {
    let rec = run(&verify_pl(0.5), Path::new(".")).unwrap();
    assert_eq!(rec.body.verdicts.len(), 6);
    for v in &rec.body.verdicts {
        assert!(v.holds && (v.ratio.0 - 1.0).abs() < 1e-9, "{v:?}");
    }
    assert_eq!(grand_poincare::exit_code(&rec), 0);

    let rec = run(&verify_pl(0.4), Path::new(".")).unwrap();
    assert!((rec.body.verdicts[0].ratio.0 - 1.25).abs() < 1e-9);
    assert_ne!(grand_poincare::exit_code(&rec), 0);
}

#[test]
fn errors_carry_config_paths() {
    let mut cfg = verify_pl(0.5);
    cfg.transfer = Some(json!({"s": 3.0, "kp": {"kind": "constant", "value": -1.0}}));
    let err = run(&cfg, Path::new(".")).unwrap_err();
    assert!(matches!(&err, RunError::Library { path, .. } if path == "transfer.kp"), "{err}");

    cfg.transfer = Some(json!({"s": 3.0, "kp": {"kind": "constant", "value": 0.5}}));
    cfg.fields = vec![json!({"kind": "values", "values": [1.0]})];
    let err = run(&cfg, Path::new(".")).unwrap_err();
    assert!(err.to_string().contains("fields[0]"), "{err}");

    cfg.task = grand_poincare::Task::VerifyAfe;
    cfg.fields = vec![json!({"kind": "values", "values": [1.0, 0.0]})];
    let err = run(&cfg, Path::new(".")).unwrap_err();
    assert!(err.to_string().contains("r_factor"), "{err}");

    let err = ExperimentConfig::from_json(r#"{"task": "verify-pl", "spaec": {}}"#).unwrap_err();
    assert!(err.to_string().contains("spaec"), "{err}");
}

#[test]
fn csv_contract() {
    let rec = run(&verify_pl(0.5), Path::new(".")).unwrap();
    let csv = emit_report(&rec, Format::Csv);
    let mut lines = csv.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# task=verify-pl seed=0") && meta.contains("space="));
    assert_eq!(lines.next().unwrap(), "grid_var,grid_value,lhs,rhs,ratio,holds");
    let mut count = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        let (lhs, rhs, ratio): (f64, f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap(), cols[4].parse().unwrap());
        assert!((ratio - lhs / rhs).abs() <= 1e-12 * ratio.abs().max(1.0));
        assert_eq!(cols[2].split('e').next().unwrap().replace(['-', '.'], "").len(), 17);
        count += 1;
    }
    assert!(count > 0);

    let scalar = config(json!({
        "task": "estimate-order",
        "space": {"grid": {"n": 64, "normalize_measure": true}}
    }));
    let rec = run(&scalar, Path::new(".")).unwrap();
    let csv = emit_report(&rec, Format::Csv);
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("scalar,,"));
}

#[test]
fn json_round_trip() {
    let mut cfg = verify_pl(0.5);
    cfg.transfer = Some(json!({"s": 3.0, "kp": {"kind": "constant", "value": 0.5}}));
    cfg.psi = Some(json!({"kind": "spike", "r": 2.0}));
    cfg.task = grand_poincare::Task::Transfer;
    cfg.grids.q = Some(vec![1.0, 2.0, 8.0]);
    let rec = run(&cfg, Path::new(".")).unwrap();
    // q = 8 puts the spike outside the bracket: an infinite transfer value.
    assert!(rec.body.rows.iter().any(|r| r.lhs.0.is_infinite()));
    let text = emit_report(&rec, Format::Json);
    let back: ReportRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn determinism_across_thread_counts() {
    let cfg = config(json!({
        "task": "verify-afe",
        "seed": 11,
        "space": {"edges": [[0, 1, 1.0], [1, 2, 0.5], [2, 3, 2.0], [3, 0, 1.0]], "weights": [1.0, 0.5, 2.0, 1.5]},
        "fields": [{"kind": "random", "count": 3}],
        "psi": {"kind": "power_blowup", "b": 3.0, "beta": 1.0},
        "transfer": {
            "s": 3.0,
            "kp": {"kind": "estimate", "p": [1.0, 2.0], "q": [1.0, 4.0, 16.0], "budget": {"restarts": 8, "iterations": 60}},
            "r_factor": {"kind": "sup_q"},
            "zeta": {"kind": "polynomial_growth", "beta": 1.0}
        },
        "grids": {"q": [1.0, 2.0, 4.0, 8.0, 16.0]}
    }));
    let a = run_with_threads(&cfg, Path::new("."), Some(1)).unwrap();
    let b = run_with_threads(&cfg, Path::new("."), None).unwrap();
    assert_eq!(a.body_json(), b.body_json());
    assert!(a.body.all_hold());
}

#[test]
fn binary_runs_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("space.json"), two_point([0.5, 0.5]).to_string()).unwrap();
    std::fs::write(dir.path().join("u.json"), "[2.0, -1.0]").unwrap();
    let write_cfg = |kp: f64| {
        let cfg = json!({
            "task": "verify-pl",
            "space": "space.json",
            "fields": [{"kind": "file", "path": "u.json"}],
            "psi": {"kind": "polynomial_growth", "beta": 1.0},
            "transfer": {"s": 3.0, "kp": {"kind": "constant", "value": kp}}
        });
        let path = dir.path().join(format!("cfg{kp}.json"));
        std::fs::write(&path, cfg.to_string()).unwrap();
        path
    };
    let bin = env!("CARGO_BIN_EXE_grand-poincare");
    let out = dir.path().join("report.csv");
    let status = Command::new(bin)
        .args(["run", "--config"])
        .arg(write_cfg(0.5))
        .args(["--seed", "3", "--format", "csv", "--out"])
        .arg(&out)
        .env("GP_THREADS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# task=verify-pl seed=3") && csv.contains("file:u.json="));

    let output = Command::new(bin).args(["run", "--config"]).arg(write_cfg(0.4)).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let rec: ReportRecord = serde_json::from_slice(&output.stdout).unwrap();
    assert!((rec.body.verdicts[0].ratio.0 - 1.25).abs() < 1e-9);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"task": "norm", "space": "missing.json"}"#).unwrap();
    let output = Command::new(bin).args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("missing.json"));
}

use std::path::Path;
use std::process::{Command, Output};

fn deadtime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deadtime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SCENE: &str = r#"{"t_r": 100, "t_d": 75, "sigma": 2, "S": 3.16, "B": 0.562, "tau": 40, "t_bin": 0.5, "n_r": 3000}"#;

#[test]
fn stationary_writes_pdf_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("scene.json"), SCENE);
    let out = dir.path().join("out");
    let o = deadtime(&[
        "stationary",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--mode",
        "dense",
        "--gap",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(out.join("stationary.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("bin_center_ns,value"));
    assert_eq!(csv.lines().count(), 201);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stationary.json")).unwrap())
            .unwrap();
    let gap = diag["gap"].as_f64().unwrap();
    assert!(gap > 0.0 && gap <= 1.0);
}

#[test]
fn simulate_then_correct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("scene.json"), SCENE);
    let out = dir.path().join("sim");
    let out_s = out.to_str().unwrap();
    let o = deadtime(&[
        "simulate",
        "--config",
        &cfg,
        "--out-dir",
        out_s,
        "--seed",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let hist = out.join("histogram.csv");
    assert_eq!(std::fs::read_to_string(&hist).unwrap().lines().count(), 201);

    let corr = dir.path().join("corr");
    let o = deadtime(&[
        "correct",
        "--hist",
        hist.to_str().unwrap(),
        "--lambda",
        "3.722",
        "--out-dir",
        corr.to_str().unwrap(),
        "--trace",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(corr.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["dead_bins"], 150);
    assert!(diag["objective_trace"].as_array().unwrap().len() >= 2);
    let text = std::fs::read_to_string(corr.join("corrected.csv")).unwrap();
    let total: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn mse_study_writes_requested_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("cfg.json"),
        r#"{"S": [3.16], "B": [0.1], "t_bin": 0.5, "n_r": [50, 200], "trials": 50, "methods": ["LF", "MCPDF"]}"#,
    );
    let out = dir.path().join("mse");
    let out_s = out.to_str().unwrap();
    let o = deadtime(&[
        "mse-study",
        "--config",
        &cfg,
        "--trials",
        "4",
        "--out-dir",
        out_s,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let mse = std::fs::read_to_string(out.join("mse.csv")).unwrap();
    assert_eq!(mse.lines().count(), 1 + 2 * 2);
    assert!(mse
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(6) == Some("4")));
    let trials = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 2 * 2 * 4);

    let o = deadtime(&[
        "mse-study",
        "--config",
        &cfg,
        "--x-axis",
        "detections",
        "--out-dir",
        out_s,
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("mse_detections.csv").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        &dir.path().join("bad.json"),
        r#"{"S": [1.0], "unknown_key": 2}"#,
    );
    for args in [
        vec!["fisher", "--config", bad.as_str()],
        vec!["fisher"],
        vec!["fisher", "--config", "/nonexistent/cfg.json"],
        vec!["frobnicate"],
        vec!["fisher", "--no-such-flag"],
        vec!["mse-study", "--config", bad.as_str(), "--threads", "0"],
    ] {
        let o = deadtime(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let hist = write(
        &dir.path().join("h.csv"),
        "bin_center_ns,count\n0.5,0\n1.5,0\n2.5,0\n3.5,0\n",
    );
    let o = deadtime(&[
        "correct",
        "--hist",
        &hist,
        "--lambda",
        "1.0",
        "--t-d",
        "1.0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = deadtime(&["correct", "--hist", "/nonexistent/h.csv", "--lambda", "1.0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(deadtime(&["--help"]).status.code(), Some(0));
    assert_eq!(deadtime(&["--version"]).status.code(), Some(0));
    let help = String::from_utf8(deadtime(&["--help"]).stdout).unwrap();
    for cmd in [
        "simulate",
        "stationary",
        "fisher",
        "estimate",
        "correct",
        "mse-study",
        "density-compare",
    ] {
        assert!(help.contains(cmd), "{cmd}");
    }
}

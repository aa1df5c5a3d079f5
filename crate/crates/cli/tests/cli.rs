use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn mpk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpk"))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .env_remove("SILVERBOX_DATA")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn fit_tiny(out: &Path, extra: &[&str]) -> Output {
    let tiny = data("tiny.csv");
    let mut args = vec!["fit", "--data", tiny.to_str().unwrap(), "-m", "1", "-r", "3", "--max-iters", "200"];
    args.extend_from_slice(extra);
    mpk(out, &args)
}

#[test]
fn expand_prints_the_pk_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpk"))
        .args(["--out", dir.path().to_str().unwrap(), "expand", "--kernel", "pk", "-m", "1", "-r", "3"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("lambda(1,1) = 6"), "{stdout}");
    let csv = read(dir.path(), "penalties.csv");
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn fit_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit_tiny(dir.path(), &["--output-lags", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = dir.path().join("model.json");
    assert!(json(dir.path(), "optimizer.json").is_object());

    let tiny = data("tiny.csv");
    let out = mpk(
        dir.path(),
        &["predict", "--model", model.to_str().unwrap(), "--data", tiny.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = json(dir.path(), "metrics.json");
    let fit = metrics["fit"].as_f64().unwrap();
    assert!(fit > 80.0, "one-step Fit% {fit} on training data");
    assert_eq!(metrics["rows"], 19);
    let predictions = read(dir.path(), "predictions.csv");
    assert_eq!(predictions.lines().next(), Some("k,y,z_hat"));
    assert_eq!(predictions.lines().count(), 1 + 19);
}

#[test]
fn freerun_equals_onestep_without_output_lags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fit_tiny(dir.path(), &["--output-lags", "0"])), 0);
    let model = dir.path().join("model.json");
    let tiny = data("tiny.csv");
    let mut files = Vec::new();
    for mode in ["onestep", "freerun"] {
        let sub = dir.path().join(mode);
        let out = mpk(
            &sub,
            &["predict", "--model", model.to_str().unwrap(), "--data", tiny.to_str().unwrap(), "--mode", mode],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        files.push(read(&sub, "predictions.csv"));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn fit_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let cfg = dir.path().join("fit.json");
        std::fs::write(&cfg, r#"{"folds": {"repeats": 3, "train": 12}}"#).unwrap();
        let out = fit_tiny(dir.path(), &["--config", cfg.to_str().unwrap(), "--tuning", "ml+cv", "--seed", "4"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["model.json", "optimizer.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn bench_writes_reports_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = mpk(
            dir.path(),
            &["bench", "--experiment", "3", "--runs", "2", "--samples", "60", "--max-iters", "30", "--seed", "7"],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(!dir.path().join("runs.partial.jsonl").exists());
    }
    for name in ["runs.csv", "report.json", "boxplot.svg"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    assert_eq!(json(a.path(), "report.json")["config"]["base_seed"], 7);
}

#[test]
fn bench_echoes_the_experiment_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpk(
        dir.path(),
        &["bench", "--experiment", "2", "--runs", "1", "--samples", "40", "--max-iters", "5"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let config = &json(dir.path(), "report.json")["config"];
    assert_eq!(config["id"], "2");
    assert_eq!(config["train_mean"], 0.0);
    assert_eq!(config["train_std"], 2.0);
    assert_eq!(config["test_std"], 2.0);
    assert_eq!(config["noise_std"], 4.0);
    assert_eq!(config["runs"], 1);
    assert_eq!(config["samples"], 40);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.json");
    std::fs::write(&cfg, r#"{"id": "custom", "train_std": 3.0, "test_std": 3.0, "runs": 5, "samples": 30}"#).unwrap();
    let out = mpk(
        dir.path(),
        &["bench", "--config", cfg.to_str().unwrap(), "--runs", "1", "--max-iters", "3"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let config = &json(dir.path(), "report.json")["config"];
    assert_eq!(config["id"], "custom");
    assert_eq!(config["train_std"], 3.0);
    assert_eq!(config["runs"], 1);
}

#[test]
fn silverbox_surrogate_and_env_data_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = mpk(a.path(), &["silverbox", "--surrogate", "--tuning", "ml", "--max-iters", "50"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = Command::new(env!("CARGO_BIN_EXE_mpk"))
        .args(["--out", b.path().to_str().unwrap(), "--quiet", "silverbox", "--tuning", "ml", "--max-iters", "50"])
        .env("SILVERBOX_DATA", data("surrogate"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(a.path(), "silverbox.csv"), read(b.path(), "silverbox.csv"));
}

#[test]
fn silverbox_without_data_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mpk(dir.path(), &["silverbox"])), 3);
}

#[test]
fn expansion_beyond_the_limit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mpk(dir.path(), &["expand", "--kernel", "pk", "-m", "40", "-r", "12"])), 2);
}

#[test]
fn input_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mpk(dir.path(), &["fit", "--bogus-flag"])), 3);
    assert_eq!(code(&mpk(dir.path(), &["fit"])), 3);
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&mpk(dir.path(), &["fit", "--data", missing.to_str().unwrap()])), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "u,y\n1.0,abc\n").unwrap();
    assert_eq!(code(&mpk(dir.path(), &["fit", "--data", bad.to_str().unwrap()])), 3);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"kernel": {"kind": "pk", "r": 0}}"#).unwrap();
    assert_eq!(code(&mpk(dir.path(), &["expand", "--config", cfg.to_str().unwrap()])), 3);
}

#[test]
fn overflowing_kernel_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("huge.csv");
    let rows: String = (0..30).map(|k| format!("{},{}\n", 1e200 * (k % 3) as f64, 1e100 * (k % 2) as f64)).collect();
    std::fs::write(&path, format!("u,y\n{rows}")).unwrap();
    let out = mpk(
        dir.path(),
        &["fit", "--data", path.to_str().unwrap(), "--no-normalize", "-m", "1", "--output-lags", "0"],
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

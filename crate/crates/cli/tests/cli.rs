use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sppiv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sppiv"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .args(["--set", "dataset.snapshots=200", "--set", "r=6", "--set", "p=5"])
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json summary")
}

fn error(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("json error");
    assert!(v["error"]["message"].is_string());
    v
}

#[test]
fn offline_chain_produces_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = summary(&sppiv(d, &["synth"]));
    assert_eq!(s["snapshots"], 200);
    summary(&sppiv(d, &["synth", "--name", "test.snap", "--start", "200", "--stream", "1"]));
    let t = summary(&sppiv(d, &["train"]));
    assert!(t["energy_ratio"].as_f64().unwrap() > 0.5);
    let sel = summary(&sppiv(d, &["select"]));
    assert_eq!(sel["indices"].as_array().unwrap().len(), 5);
    let test = format!("paths.test_dataset=\"{}\"", d.join("test.snap").display());
    let e = summary(&sppiv(d, &["estimate", "--set", &test]));
    let eps = e["epsilon"].as_f64().unwrap();
    assert!(eps > 0.0 && eps < 1.0, "epsilon {eps}");
    for f in ["config.toml", "dataset.snap", "basis.pod", "dynamics.rom", "model.rom", "sensors.csv", "spectrum.csv", "estimate.csv"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let stream = std::fs::read_to_string(d.join("estimate.csv")).unwrap();
    assert_eq!(stream.lines().count(), 201);
}

#[test]
fn validate_and_sweep_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let v = summary(&sppiv(d, &["validate", "--seed", "4"]));
    assert_eq!(v["folds"], 5);
    let s = summary(&sppiv(d, &["sweep", "--set", "sweep.p=[3, 6]", "--set", "sweep.r=[6]"]));
    assert_eq!(s["cases"], 4);
    assert_eq!(s["failed"], 0);
    let csv = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("r,p,theta_train"));
    assert_eq!(csv.lines().count(), 5);
    let cfg = std::fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(cfg.contains("seed = 1"), "sweep run used the default seed");
}

#[test]
fn bench_and_rtsim_run_small() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let b = summary(&sppiv(
        d,
        &["bench", "--set", "bench.p=[2, 4, 6]", "--set", "bench.steps=5", "--set", "bench.repeats=2", "--set", "bench.train_snapshots=100"],
    ));
    assert_eq!(b["points"], 3);
    let r = summary(&sppiv(
        d,
        &["rtsim", "--set", "rtsim.pairs=40", "--set", "rtsim.runs=1", "--set", "rtsim.sampling_rate=400.0", "--set", "rtsim.train_snapshots=100"],
    ));
    let run = &r["runs"][0];
    assert_eq!(run["produced"], 40);
    assert_eq!(run["processed"].as_u64().unwrap() + run["dropped"].as_u64().unwrap(), 40);
    assert!(d.join("rtsim_run1.csv").exists());
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.toml");
    std::fs::write(&cfg, "seed = 9\ntheta = 2.0\n[dataset]\nnoise = 0.3\n").unwrap();
    let cfg_arg = cfg.to_str().unwrap();
    summary(&sppiv(d, &["synth", "--config", cfg_arg, "--set", "dataset.noise=0.1"]));
    let used = std::fs::read_to_string(d.join("config.toml")).unwrap();
    assert!(used.contains("seed = 9"));
    assert!(used.contains("theta = 2.0"));
    assert!(used.contains("noise = 0.1"));
    summary(&sppiv(d, &["synth", "--config", cfg_arg, "--seed", "11"]));
    assert!(std::fs::read_to_string(d.join("config.toml")).unwrap().contains("seed = 11"));
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let e = error(&sppiv(d, &["train", "--set", "folds=1"]));
    assert_eq!(e["error"]["code"], "invalid_config");
    let e = error(&sppiv(d, &["estimate"]));
    assert_eq!(e["error"]["code"], "io_error");
    let e = error(&sppiv(d, &["train", "--set", "nope.key=3"]));
    assert_eq!(e["error"]["code"], "invalid_config");
    let out = sppiv(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error(&out)["error"]["code"], "usage");
    let out = sppiv(d, &["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#![cfg(feature = "cli")]

use std::path::Path;
use std::process::{Command, Output};

use geocsi::harness::ExperimentConfig;

fn geocsi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geocsi"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_clear()
        .output()
        .expect("run geocsi")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A small config that trains in well under a second.
fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut c = ExperimentConfig::quick();
    c.n_realizations = 1;
    c.scenario.csi_size = 60;
    c.scenario.dft_size = 8;
    c.scenario.hidden_neurons = 4;
    c.predictor.epochs = 1;
    c.predictor.bptt_len = 10;
    c.ssnr_sweep_db = vec![0.0, 20.0];
    let path = dir.join("tiny.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    path
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    ok(&geocsi(&["generate", "--config", cfg.to_str().unwrap(), "--seed", "42", "--ssnr", "-5,5"], &out));
    let written = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(written.seed, 42);
    assert_eq!(written.ssnr_sweep_db, vec![-5.0, 5.0]);
    assert_eq!(written.scenario.dft_size, 8);
    assert!(out.join("dataset/r000/est_LS_-5dB.trace").exists());
}

#[test]
fn environment_variables_act_like_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_geocsi"))
        .arg("generate")
        .env_clear()
        .env("GEOCSI_CONFIG", &cfg)
        .env("GEOCSI_SEED", "9")
        .env("GEOCSI_ESTIMATORS", "LS")
        .env("GEOCSI_OUT", &out)
        .output()
        .unwrap();
    ok(&o);
    let written = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(written.seed, 9);
    assert!(!out.join("dataset/r000/est_LSMMSE_0dB.trace").exists());
}

#[test]
fn generate_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["generate", "--config", cfg.to_str().unwrap()];
    ok(&geocsi(&args, &a));
    ok(&geocsi(&args, &b));
    let manifest = |d: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap();
        v["files"].clone()
    };
    assert_eq!(manifest(&a), manifest(&b));
    assert_eq!(manifest(&a).as_array().unwrap().len(), 6);
}

#[test]
fn empty_mode_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::quick();
    c.predictor_modes.clear();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, c.to_toml()).unwrap();
    let o = geocsi(&["sweep", "--config", path.to_str().unwrap()], &dir.path().join("out"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_with_missing_checkpoints_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = geocsi(&["sweep", "--config", cfg.to_str().unwrap(), "--load-checkpoints"], &dir.path().join("out"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing checkpoint"));
}

#[test]
fn train_then_sweep_from_checkpoints_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let c = cfg.to_str().unwrap();
    ok(&geocsi(&["train", "--config", c], &out));
    assert!(out.join("models/open_loop.ckpt").exists());
    assert!(out.join("models/closed_loop.ckpt").exists());

    let from_ckpt = ok(&geocsi(&["sweep", "--config", c, "--load-checkpoints"], &out));
    let loaded = std::fs::read(out.join("results.csv")).unwrap();
    let fresh_dir = dir.path().join("fresh");
    ok(&geocsi(&["sweep", "--config", c], &fresh_dir));
    assert_eq!(loaded, std::fs::read(fresh_dir.join("results.csv")).unwrap());

    // 2 estimators x 3 modes x 2 SSNRs
    let csv = String::from_utf8(loaded).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(from_ckpt.contains("closed_loop"));

    let report = ok(&geocsi(&["report"], &out));
    assert_eq!(report.lines().count(), 13);
    assert!(report.lines().next().unwrap().contains("nmse_avg"));
}

#[test]
fn report_of_a_missing_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = geocsi(&["report"], &dir.path().join("nothing"));
    assert!(!o.status.success());
}

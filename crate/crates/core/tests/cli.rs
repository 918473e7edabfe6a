mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::tiny_run;
use ctclab::distill::Method;
use ctclab::harness::{RunConfig, FINAL_FILE, MODEL_FILE};

fn ctclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctclab"))
        .args(args)
        .env("CTCLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(cfg: &RunConfig, path: &Path) -> String {
    std::fs::write(path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn print_config_emits_full_defaults() {
    let out = ctclab(&["train", "--print-config"]);
    assert!(out.status.success());
    let cfg: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.epochs, 60);
    assert_eq!(cfg.batch_size, 16);
    assert_eq!(cfg.freeze_fraction, 0.125);
    assert_eq!(cfg.optim.lr, 1e-3);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&tiny_run(Method::Skd, dir.path()), &dir.path().join("c.json"));
    let out = ctclab(&["train", "--config", &path, "--seed", "11", "--method", "layer_prune", "--mask", "on", "--print-config"]);
    assert!(out.status.success());
    let cfg: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.distill.method, Method::LayerPrune);
    assert!(cfg.distill.masking);
}

#[test]
fn train_eval_compare_analyze_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let base_cfg = write_config(&tiny_run(Method::None, &r.join("base")), &r.join("base.json"));
    let skd_cfg = write_config(&tiny_run(Method::Skd, &r.join("skd")), &r.join("skd.json"));
    for c in [&base_cfg, &skd_cfg] {
        let out = ctclab(&["train", "--config", c, "--quiet"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(r.join("skd").join(FINAL_FILE).exists());

    let data = r.join("data");
    let out = ctclab(&["gen-data", "--config", &skd_cfg, "--out", data.to_str().unwrap()]);
    assert!(out.status.success());
    let ckpt = r.join("skd").join(MODEL_FILE);
    let eval = |extra: &[&str]| {
        let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap()];
        let test_dir = data.join("test");
        let test = test_dir.to_str().unwrap().to_string();
        args.extend(["--data", &test]);
        args.extend(extra);
        let out = ctclab(&args);
        (out.status.success(), out.stdout)
    };
    let (ok, a) = eval(&["--student-path"]);
    assert!(ok);
    let (_, b) = eval(&["--student-path"]);
    assert_eq!(a, b);
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["cer"], report["report"]["inter_path"]["cer"]);
    let (ok, _) = eval(&["--config", &base_cfg]);
    assert!(!ok, "architecture mismatch must fail");

    let out = ctclab(&["compare", r.join("base").to_str().unwrap(), r.join("skd").to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("run"));
    let out = ctclab(&["compare", "--json", r.join("base").to_str().unwrap(), r.join("skd").to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);

    let out = ctclab(&["analyze", r.join("skd").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(r.join("skd").join("analysis").join("grids.jsonl").exists());
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&tiny_run(Method::GuideCtc, &dir.path().join("g")), &dir.path().join("g.json"));
    let out = ctclab(&["train", "--config", &path, "--quiet"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("teacher"));
    assert!(!ctclab(&["train", "--method", "bogus", "--print-config"]).status.success());
    assert!(!ctclab(&["compare", dir.path().to_str().unwrap(), dir.path().to_str().unwrap()]).status.success());
    assert!(!ctclab(&["train", "--config", "/nonexistent/config.json"]).status.success());
}

//! End-to-end runs of the `netsynth` binary on a tiny corpus.

use std::path::Path;
use std::process::{Command, Output};

use netsynth::fidelity::EvalReport;
use netsynth::schema::load_dataset;

fn netsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsynth"))
        .args(args)
        .env_remove("NETSYNTH_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = netsynth(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"{
    "model_config": {
        "attr_mlp": [8], "minmax_mlp": [8], "rnn_units": 8,
        "disc_mlp": [16, 16], "aux_disc_mlp": [8], "batch_size": 10
    },
    "train": { "max_batches": 3, "log_every": 0 }
}"#;

fn corpus(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    ok(&["make-corpus", "--out", s(&data), "--samples", "40", "--lengths", "8,12", "--seed", "4"]);
    data
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn train_generate_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path());
    let config = tmp.path().join("run.json");
    std::fs::write(&config, TINY).unwrap();
    let run = tmp.path().join("run");
    ok(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&run), "--seed", "5"]);
    assert!(run.join("model.json").is_file() && run.join("train_log.csv").is_file());
    let m = manifest(&run);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["train"]["max_batches"], 3);
    assert_eq!(m["inputs"][0]["hash"], load_dataset(&data).unwrap().content_hash());

    let synth = tmp.path().join("synth");
    ok(&["generate", "--checkpoint", s(&run.join("model.json")), "--out", s(&synth), "--count", "15"]);
    let ds = load_dataset(&synth).unwrap();
    assert_eq!(ds.len(), 15);
    assert!(ds.lengths().iter().all(|&l| (1..=12).contains(&l)));

    let forced = tmp.path().join("forced");
    ok(&["generate", "--checkpoint", s(&run.join("model.json")), "--out", s(&forced), "--count", "4", "--length", "5"]);
    assert!(load_dataset(&forced).unwrap().lengths().iter().all(|&l| l == 5));

    let eval = tmp.path().join("eval");
    ok(&["evaluate", "--real", s(&data), "--synth", s(&synth), "--out", s(&eval), "--metrics", "autocorr,w1", "--max-lag", "5"]);
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report.metrics.iter().map(|m| m.name.as_str()).collect();
    assert!(!names.is_empty());
    assert!(names.iter().all(|n| n.starts_with("autocorr_") || n.starts_with("total_w1")), "{names:?}");
    assert!(names.contains(&"total_w1/value"));
    assert!(eval.join("plots/autocorr_value.svg").is_file());
    assert!(eval.join("manifest.json").is_file());
}

#[test]
fn conditional_generation_and_retargeting() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path());
    let config = tmp.path().join("run.json");
    std::fs::write(&config, TINY).unwrap();
    let run = tmp.path().join("run");
    ok(&["train", "--config", s(&config), "--data", s(&data), "--out", s(&run)]);
    let model = run.join("model.json");

    let meta = tmp.path().join("meta.json");
    std::fs::write(&meta, r#"{"class": "B"}"#).unwrap();
    let cond = tmp.path().join("cond");
    ok(&["generate", "--checkpoint", s(&model), "--out", s(&cond), "--count", "6", "--metadata-file", s(&meta)]);
    let ds = load_dataset(&cond).unwrap();
    assert!(ds.samples.iter().all(|x| x.metadata[0].as_category() == Some("B")));

    std::fs::write(&meta, r#"{"class": "C", "colour": 1}"#).unwrap();
    let bad = netsynth(&["generate", "--checkpoint", s(&model), "--out", s(&cond), "--metadata-file", s(&meta)]);
    assert!(!bad.status.success());

    let retargeted = tmp.path().join("retargeted");
    ok(&["retarget", "--checkpoint", s(&model), "--target", s(&data), "--out", s(&retargeted), "--max-batches", "2"]);
    assert!(retargeted.join("model.json").is_file());
}

#[test]
fn baselines_train_and_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path());
    let config = tmp.path().join("run.json");
    std::fs::write(&config, r#"{"hmm": {"states": 2, "max_iter": 5}, "ar": {"hidden": [4]}}"#).unwrap();
    for (model, extra) in [("hmm", vec![]), ("ar", vec!["--max-batches", "5"])] {
        let run = tmp.path().join(model);
        let mut args = vec!["train", "--config", s(&config), "--model", model, "--data", s(&data), "--out", s(&run)];
        args.extend(extra);
        ok(&args);
        let synth = tmp.path().join(format!("{model}_synth"));
        ok(&["generate", "--checkpoint", s(&run.join("model.json")), "--out", s(&synth), "--count", "5"]);
        assert_eq!(load_dataset(&synth).unwrap().len(), 5);
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let status = Command::new(env!("CARGO_BIN_EXE_netsynth"))
        .args(["make-corpus", "--out", s(&out), "--samples", "10"])
        .env("NETSYNTH_SEED", "17")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(manifest(&out)["seed"], 17);
    let again = tmp.path().join("d");
    ok(&["make-corpus", "--out", s(&again), "--samples", "10", "--seed", "17"]);
    assert_eq!(load_dataset(&out).unwrap(), load_dataset(&again).unwrap());
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = netsynth(&["train", "--no-such-flag"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn validation_reports_every_problem_on_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"model_config": {"batch_size": 0, "lr": -1.0}}"#).unwrap();
    let out = netsynth(&["train", "--config", s(&config)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["error"], "validation");
    let msg = v["message"].as_str().unwrap();
    for needle in ["--data is required", "--out is required", "batch_size", "lr"] {
        assert!(msg.contains(needle), "missing {needle:?} in {msg}");
    }
}

#[test]
fn bad_metric_family_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path());
    let out = netsynth(&["evaluate", "--real", s(&data), "--synth", s(&data), "--out", s(tmp.path()), "--metrics", "autocorr,bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

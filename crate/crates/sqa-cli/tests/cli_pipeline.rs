//! End-to-end command-line pipeline checks on a small task.

use std::path::{Path, PathBuf};
use std::process::Command;

fn sqa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqa"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn sqa");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("sqa-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth_small(dir: &Path, seed: u64) {
    run_ok(sqa().args([
        "synth",
        "--out",
        dir.join("data").to_str().unwrap(),
        "--train",
        "40",
        "--dev",
        "12",
        "--vocab-words",
        "18",
        "--k",
        "16",
        "--dim",
        "8",
        "--passage-words",
        "10",
        "--seed",
        &seed.to_string(),
    ]));
}

fn kmeans_small(dir: &Path) {
    run_ok(sqa().args([
        "kmeans",
        "--features",
        dir.join("data/features/*_p.feat").to_str().unwrap(),
        "--k",
        "16",
        "--out",
        dir.join("cb.cdbk").to_str().unwrap(),
        "--seed",
        "3",
    ]));
}

fn train_small(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec![
        "train".to_string(),
        "--manifest".into(),
        dir.join("data/train.jsonl").display().to_string(),
        "--val-manifest".into(),
        dir.join("data/dev.jsonl").display().to_string(),
        "--codebook".into(),
        dir.join("cb.cdbk").display().to_string(),
        "--out".into(),
        dir.join(out).display().to_string(),
        "--layers".into(),
        "1".into(),
        "--model-dim".into(),
        "16".into(),
        "--heads".into(),
        "2".into(),
        "--ffn-dim".into(),
        "32".into(),
        "--local-window".into(),
        "4".into(),
        "--max-len".into(),
        "96".into(),
        "--dropout".into(),
        "0.0".into(),
        "--steps".into(),
        "25".into(),
        "--warmup".into(),
        "5".into(),
        "--batch-size".into(),
        "8".into(),
        "--eval-every".into(),
        "25".into(),
        "--seed".into(),
        "5".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    run_ok(sqa().args(&args));
}

#[test]
fn full_pipeline_and_reruns_are_bitwise_identical() {
    let dir = workdir("pipeline");
    synth_small(&dir, 7);
    kmeans_small(&dir);
    train_small(&dir, "run", &[]);
    run_ok(sqa().args([
        "eval",
        "--manifest",
        dir.join("data/dev.jsonl").to_str().unwrap(),
        "--codebook",
        dir.join("cb.cdbk").to_str().unwrap(),
        "--checkpoint",
        dir.join("run/checkpoint.tnsr").to_str().unwrap(),
        "--out",
        dir.join("eval").to_str().unwrap(),
        "--plot",
    ]));
    run_ok(sqa().args([
        "cascade",
        "--manifest",
        dir.join("data/dev.jsonl").to_str().unwrap(),
        "--out",
        dir.join("casc").to_str().unwrap(),
        "--wer-range",
        "0:0.6",
        "--seed",
        "9",
    ]));
    run_ok(sqa().args([
        "buckets",
        "--dual-report",
        dir.join("eval/eval.jsonl").to_str().unwrap(),
        "--cascade-report",
        dir.join("casc/cascade.jsonl").to_str().unwrap(),
        "--edges",
        "0,0.2,0.4,0.6,2.0",
        "--out",
        dir.join("buck").to_str().unwrap(),
        "--plot",
    ]));

    for f in [
        "eval/eval.jsonl",
        "eval/summary.json",
        "eval/ff1_hist.svg",
        "casc/cascade.jsonl",
        "buck/buckets.jsonl",
        "buck/buckets.svg",
        "run/checkpoint.tnsr",
        "run/train_log.jsonl",
        "data/meta.json",
    ] {
        assert!(dir.join(f).exists(), "missing output {f}");
    }

    // Rerun the training and evaluation with a different thread count:
    // bitwise identical reports.
    let rerun = |out: &str, threads: &str| {
        run_ok(sqa().args([
            "--threads",
            threads,
            "train",
            "--manifest",
            dir.join("data/train.jsonl").to_str().unwrap(),
            "--val-manifest",
            dir.join("data/dev.jsonl").to_str().unwrap(),
            "--codebook",
            dir.join("cb.cdbk").to_str().unwrap(),
            "--out",
            dir.join(out).to_str().unwrap(),
            "--layers",
            "1",
            "--model-dim",
            "16",
            "--heads",
            "2",
            "--ffn-dim",
            "32",
            "--local-window",
            "4",
            "--max-len",
            "96",
            "--dropout",
            "0.0",
            "--steps",
            "25",
            "--warmup",
            "5",
            "--batch-size",
            "8",
            "--eval-every",
            "25",
            "--seed",
            "5",
        ]));
    };
    rerun("run_t1", "1");
    rerun("run_t3", "3");
    let a = std::fs::read(dir.join("run_t1/checkpoint.tnsr")).unwrap();
    let b = std::fs::read(dir.join("run_t3/checkpoint.tnsr")).unwrap();
    let orig = std::fs::read(dir.join("run/checkpoint.tnsr")).unwrap();
    assert_eq!(a, b, "thread count changed the checkpoint");
    assert_eq!(a, orig, "rerun changed the checkpoint");
    assert_eq!(
        std::fs::read(dir.join("run_t1/train_log.jsonl")).unwrap(),
        std::fs::read(dir.join("run_t3/train_log.jsonl")).unwrap()
    );
}

#[test]
fn mlm_pretrain_then_finetune_via_cli() {
    let dir = workdir("transfer");
    synth_small(&dir, 21);
    kmeans_small(&dir);
    // Pretrain on the same small corpus (mechanics only).
    run_ok(sqa().args([
        "train",
        "--manifest",
        dir.join("data/train.jsonl").to_str().unwrap(),
        "--codebook",
        dir.join("cb.cdbk").to_str().unwrap(),
        "--out",
        dir.join("donor").to_str().unwrap(),
        "--objective",
        "mlm",
        "--layers",
        "1",
        "--model-dim",
        "16",
        "--heads",
        "2",
        "--ffn-dim",
        "32",
        "--local-window",
        "4",
        "--max-len",
        "96",
        "--dropout",
        "0.0",
        "--steps",
        "20",
        "--warmup",
        "5",
        "--batch-size",
        "8",
        "--seed",
        "5",
    ]));
    // Fine-tune from the donor; the body shape comes from the checkpoint.
    run_ok(sqa().args([
        "train",
        "--manifest",
        dir.join("data/train.jsonl").to_str().unwrap(),
        "--val-manifest",
        dir.join("data/dev.jsonl").to_str().unwrap(),
        "--codebook",
        dir.join("cb.cdbk").to_str().unwrap(),
        "--out",
        dir.join("ft").to_str().unwrap(),
        "--donor",
        dir.join("donor/checkpoint.tnsr").to_str().unwrap(),
        "--assign",
        "most_frequent",
        "--steps",
        "25",
        "--warmup",
        "5",
        "--batch-size",
        "8",
        "--eval-every",
        "25",
        "--seed",
        "5",
    ]));
    assert!(dir.join("ft/checkpoint.tnsr").exists());

    // Conflicting body flags are rejected.
    let out = sqa()
        .args([
            "train",
            "--manifest",
            dir.join("data/train.jsonl").to_str().unwrap(),
            "--codebook",
            dir.join("cb.cdbk").to_str().unwrap(),
            "--out",
            dir.join("bad").to_str().unwrap(),
            "--donor",
            dir.join("donor/checkpoint.tnsr").to_str().unwrap(),
            "--layers",
            "2",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn eval_rejects_mismatched_codebook() {
    let dir = workdir("mismatch");
    synth_small(&dir, 3);
    kmeans_small(&dir);
    train_small(&dir, "run", &[]);
    // Codebook with a different dimensionality.
    run_ok(sqa().args([
        "synth",
        "--out",
        dir.join("other").to_str().unwrap(),
        "--train",
        "20",
        "--dev",
        "4",
        "--vocab-words",
        "18",
        "--k",
        "16",
        "--dim",
        "6",
        "--passage-words",
        "10",
        "--seed",
        "4",
    ]));
    run_ok(sqa().args([
        "kmeans",
        "--features",
        dir.join("other/features/*_p.feat").to_str().unwrap(),
        "--k",
        "16",
        "--out",
        dir.join("other_cb.cdbk").to_str().unwrap(),
        "--seed",
        "3",
    ]));
    let out = sqa()
        .args([
            "eval",
            "--manifest",
            dir.join("data/dev.jsonl").to_str().unwrap(),
            "--codebook",
            dir.join("other_cb.cdbk").to_str().unwrap(),
            "--checkpoint",
            dir.join("run/checkpoint.tnsr").to_str().unwrap(),
            "--out",
            dir.join("eval_bad").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success(), "dimension mismatch must fail");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("dimension mismatch") || stderr.contains("expected"),
        "unhelpful error: {stderr}"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = workdir("config");
    let cfg_path = dir.join("sqa.toml");
    std::fs::write(
        &cfg_path,
        "[synth]\ntrain = 15\ndev = 5\nvocab_words = 18\nk = 16\ndim = 8\npassage_words = 10\nseed = 2\n",
    )
    .unwrap();
    // Config supplies everything; flag overrides train count.
    run_ok(sqa().args([
        "--config",
        cfg_path.to_str().unwrap(),
        "synth",
        "--out",
        dir.join("data").to_str().unwrap(),
        "--train",
        "9",
    ]));
    let manifest = std::fs::read_to_string(dir.join("data/train.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 9, "flag must override config");
    let dev = std::fs::read_to_string(dir.join("data/dev.jsonl")).unwrap();
    assert_eq!(dev.lines().count(), 5, "config value must apply");
    // The effective config is recorded.
    let recorded: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("data/config.json")).unwrap())
            .unwrap();
    assert_eq!(recorded["config"]["n_train"], 9);
    assert_eq!(recorded["config"]["seed"], 2);
}

#[test]
fn run_root_env_var_rebases_relative_outputs() {
    let dir = workdir("runroot");
    // Note: env var applies to the child process only.
    let out = sqa()
        .env("SQA_RUN_ROOT", dir.to_str().unwrap())
        .args([
            "synth", "--out", "data", "--train", "6", "--dev", "2", "--vocab-words", "18",
            "--k", "16", "--dim", "8", "--passage-words", "10", "--seed", "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("data/train.jsonl").exists());
}

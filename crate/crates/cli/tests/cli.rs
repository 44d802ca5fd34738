use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use snnstory_core::bundle::validate_bundle_str;
use snnstory_core::stats::embedded_study_data;

fn command(line: &str, cwd: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_snnstory"));
    cmd.args(line.split_whitespace())
        .current_dir(cwd)
        .env("RUST_LOG", "warn");
    cmd
}

/// Runs a whitespace-separated command line.
fn snnstory(line: &str, cwd: &Path) -> Output {
    command(line, cwd).output().expect("binary runs")
}

fn ok(line: &str, cwd: &Path) -> String {
    let out = snnstory(line, cwd);
    assert!(
        out.status.success(),
        "`{line}` failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn count_ppm(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            if p.is_dir() {
                count_ppm(&p)
            } else {
                usize::from(p.extension().is_some_and(|e| e == "ppm"))
            }
        })
        .sum()
}

/// Small staged run: data, run.json, frames.json, inference.json.
fn stage(dir: &Path, seed: u64) {
    ok(
        &format!("dataset gen --classes 3 --per-class 8 --seed {seed} --out data"),
        dir,
    );
    ok(
        "train --data data --epochs 4 --batch 16 --out run.json",
        dir,
    );
    ok(
        "project --run run.json --iterations 120 --exaggeration-iters 40 --perplexity 5 --out frames.json",
        dir,
    );
    ok(
        "infer --data data --run run.json --frames frames.json --out inference.json",
        dir,
    );
}

const BUNDLE: &str = "bundle --data data --run run.json --frames frames.json \
                      --inference inference.json --out bundle.json --no-quiz";

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn dataset_gen_writes_every_image_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let gen = "dataset gen --classes 4 --per-class 50 --size 16 --seed 42 --out data";
    ok(gen, dir.path());
    assert_eq!(count_ppm(&dir.path().join("data")), 200);
    let manifest = dir.path().join("data/manifest.json");
    let first = std::fs::read(&manifest).unwrap();
    ok(gen, dir.path());
    assert_eq!(std::fs::read(&manifest).unwrap(), first);
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = snnstory("dataset gen --classes 4", dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn import_keeps_the_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ok("dataset gen --classes 2 --per-class 3 --out a", dir.path());
    let imported = ok("dataset import --from a --out b", dir.path());
    assert_eq!(gen, imported);
}

#[test]
fn staged_pipeline_yields_a_valid_deterministic_bundle() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), 42);
    ok(BUNDLE, dir.path());
    let path = dir.path().join("bundle.json");
    let first = std::fs::read_to_string(&path).unwrap();
    assert!(validate_bundle_str(&first).unwrap().is_empty());
    ok(BUNDLE, dir.path());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
    assert!(ok("validate --bundle bundle.json", dir.path()).contains("ok"));
}

#[test]
fn artifacts_echo_their_settings() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), 42);
    let run = read_json(&dir.path().join("run.json"));
    assert_eq!(run["hyperparams"]["epochs"], 4);
    assert_eq!(run["hyperparams"]["margin"], 1.0);
    assert_eq!(run["hyperparams"]["sampling"], "random");
    let frames = read_json(&dir.path().join("frames.json"));
    assert_eq!(frames["config"]["iterations"], 120);
    assert_eq!(frames["config"]["early_exaggeration"], 4.0);
    assert_eq!(read_json(&dir.path().join("inference.json"))["k"], 5);
    assert_eq!(
        read_json(&dir.path().join("data/synthetic.json"))["num_classes"],
        3
    );
}

#[test]
fn foreign_frames_are_a_fingerprint_error() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), 42);
    let other = dir.path().join("other");
    std::fs::create_dir(&other).unwrap();
    stage(&other, 7);
    let out = snnstory(
        "bundle --data data --run run.json --frames other/frames.json \
         --inference inference.json --out bundle.json",
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fingerprint mismatch"), "{err}");
    assert!(err.contains("other/frames.json has"), "{err}");
    assert!(err.contains("data has"), "{err}");
}

#[test]
fn validate_rejects_an_edited_bundle() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), 42);
    ok(BUNDLE, dir.path());
    let path = dir.path().join("bundle.json");
    let mut doc = read_json(&path);
    doc["slices"][3]["initial_loss"] = serde_json::json!(123.0);
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = snnstory("validate --bundle bundle.json", dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial_loss"));
}

#[test]
fn stats_prints_the_study_report() {
    let dir = tempfile::tempdir().unwrap();
    let report: serde_json::Value = serde_json::from_str(&ok("stats", dir.path())).unwrap();
    let pooled = &report["independent_samples_test"]["equal_variances_assumed"];
    assert!((pooled["t"].as_f64().unwrap() - 4.44).abs() <= 0.01);
    assert_eq!(pooled["df"].as_f64().unwrap(), 48.0);
}

#[test]
fn stats_reads_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    embedded_study_data().to_csv(&mut csv).unwrap();
    std::fs::write(dir.path().join("scores.csv"), csv).unwrap();
    let from_csv = ok("stats --csv scores.csv --out report.json", dir.path());
    assert_eq!(from_csv, ok("stats", dir.path()));
    let written = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(written, from_csv);

    std::fs::write(dir.path().join("bad.csv"), "group,pid,pre,post\na,1,2,9\n").unwrap();
    let out = snnstory("stats --csv bad.csv", dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_and_fetch_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    stage(dir.path(), 42);
    ok(BUNDLE, dir.path());
    let mut child = command("serve --bundle bundle.json --port 0", dir.path())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("serving ").expect("address line");

    let fetch = format!("fetch --url {url} --out fetched.json --parity-out parity.json");
    ok(&fetch, dir.path());
    ok(&format!("validate --url {url}"), dir.path());
    child.kill().unwrap();
    child.wait().unwrap();

    assert_eq!(
        std::fs::read(dir.path().join("fetched.json")).unwrap(),
        std::fs::read(dir.path().join("bundle.json")).unwrap()
    );
    let parity = read_json(&dir.path().join("parity.json"));
    assert_eq!(parity["cases"].as_array().unwrap().len(), 20);
}

#[test]
fn serve_refuses_an_invalid_bundle() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bundle.json"), "{\"format_version\": 1}").unwrap();
    let out = snnstory("serve --bundle bundle.json --port 0", dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_writes_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "synthetic": {"num_classes": 3, "per_class": 8, "image_size": 16, "noise_sigma": 16.0, "seed": 5},
        "hyperparams": {"epochs": 3, "batch_triplets": 16, "learning_rate": 0.05, "margin": 1.0,
                        "loss_kind": "triplet", "sampling": "semi_hard", "seed": 5},
        "tsne": {"perplexity": 5.0, "iterations": 100, "learning_rate": 100.0, "early_exaggeration": 4.0,
                 "exaggeration_iters": 30, "momentum": 0.5, "final_momentum": 0.8,
                 "momentum_switch_iter": 250, "seed": 0}
    });
    std::fs::write(dir.path().join("config.json"), config.to_string()).unwrap();
    ok("pipeline --config config.json --out out", dir.path());
    assert!(ok("validate --bundle out/bundle.json", dir.path()).contains("ok"));
    let echoed = read_json(&dir.path().join("out/config.json"));
    assert_eq!(echoed["k"], 5);
    assert_eq!(echoed["hyperparams"]["sampling"], "semi_hard");

    // the staged commands accept the pipeline's files
    ok(
        "infer --data out/data --run out/run.json --frames out/frames.json --out again.json",
        dir.path(),
    );
    assert_eq!(
        read_json(&dir.path().join("again.json")),
        read_json(&dir.path().join("out/inference.json"))
    );
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use batchmix_harness::report::{parse_records, parse_summary, HEADER};

fn batchmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_batchmix")).args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("batchmix-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const TINY: &str = r#"{
  "preset": "fig1",
  "mixture": {"d": 4, "k": 2, "heavy": 2, "alpha": 0.5},
  "algo": {"d": 4, "k": 2, "alpha_s": 0.5, "alpha_m": 0.5},
  "n_small_batches": 2000,
  "n_medium_batches": 24,
  "draws": 3,
  "n_new_batches": 20,
  "sweep": [24],
  "seeds": [0, 1]
}"#;

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    std::fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = batchmix(&["run", "--preset", "fig9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn missing_source_is_a_config_error() {
    assert_eq!(batchmix(&["run"]).status.code(), Some(1));
    assert_eq!(batchmix(&["run", "--preset", "fig1", "--scale", "0.5"]).status.code(), Some(1));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = scratch("bad");
    let path = dir.join("bad.json");
    std::fs::write(&path, r#"{"preset": "fig1", "seeds": []}"#).unwrap();
    assert_eq!(batchmix(&["run", "--config", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn run_writes_parseable_csv_and_summary() {
    let dir = scratch("run");
    let cfg = tiny_config(&dir);
    let csv = dir.join("out.csv");
    let lists = dir.join("lists");
    let out = batchmix(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--save-lists",
        lists.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(HEADER));
    let records = parse_records(&text).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.avg_mse >= 0.0 && r.n_m == 24 && r.wall_ms == 0));
    let summary = parse_summary(&std::fs::read_to_string(dir.join("out.summary.csv")).unwrap()).unwrap();
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].runs, 2);

    // re-evaluating a saved list reproduces a record for the same cell
    let list = lists.join("fig1_nm24_seed0.json");
    let eval = batchmix(&["eval", "--config", cfg.to_str().unwrap(), "--list", list.to_str().unwrap()]);
    assert_eq!(eval.status.code(), Some(0), "{}", String::from_utf8_lossy(&eval.stderr));
    let again = parse_records(&String::from_utf8(eval.stdout).unwrap()).unwrap();
    assert_eq!(again.len(), 1);
    assert_eq!((again[0].seed, again[0].n_m, again[0].list_size), (0, 24, records[0].list_size));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = scratch("repeat");
    let cfg = tiny_config(&dir);
    let run = |name: &str| {
        let path = dir.join(name);
        let out = batchmix(&["sweep", "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap(), "--seed", "1"]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn generate_writes_pools() {
    let dir = scratch("generate");
    let cfg = tiny_config(&dir);
    let path = dir.join("pools.json");
    let out = batchmix(&["generate", "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    assert_eq!(doc["medium"]["batches"].as_array().unwrap().len(), 24);
}

#[test]
fn selftest_passes() {
    let out = batchmix(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("criterion")).count(), 6);
    assert!(!text.contains("FAIL"));
}

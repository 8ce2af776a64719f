//! End-to-end tests of the binary: exit codes, file outputs, stream
//! discipline, and the eval JSON schema.

use std::path::Path;
use std::process::{Command, Output};

fn consynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consynth"))
        .args(args)
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_toy(dir: &Path, name: &str, n: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let r = consynth(&[
        "toy-gen",
        "--n",
        n,
        "--minority-fraction",
        "0.3",
        "--seed",
        seed,
        "--out",
        path_str(&out),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn synth_happy_path_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_toy(dir.path(), "toy.csv", "100", "7");
    let syn = dir.path().join("syn.csv");
    let r = consynth(&[
        "synth",
        "--train",
        path_str(&train),
        "--epsilon",
        "0.9",
        "--grid-step",
        "0.1",
        "--k",
        "1",
        "--calib-fraction",
        "0.5",
        "--seed",
        "7",
        "--pvalue-direction",
        "standard-ge",
        "--out",
        path_str(&syn),
    ]);
    assert_eq!(r.status.code(), Some(0));
    assert!(r.stdout.is_empty(), "stdout must carry only requested artifacts");
    assert!(syn.exists());
    let regions = dir.path().join("syn.regions.json");
    assert!(regions.exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&regions).unwrap()).unwrap();
    assert_eq!(summary["epsilon"], 0.9);
    assert_eq!(summary["gamma"], 0.1);
    let per_class = summary["per_class"].as_array().unwrap();
    assert_eq!(per_class.len(), 2);
    let total: u64 = per_class
        .iter()
        .map(|c| c["synth_count"].as_u64().unwrap())
        .sum();
    let lines = std::fs::read_to_string(&syn).unwrap().lines().count() as u64;
    assert_eq!(lines, total + 1); // header
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_toy(dir.path(), "toy.csv", "50", "1");
    let out = dir.path().join("syn.csv");
    let r = consynth(&[
        "synth",
        "--train",
        path_str(&train),
        "--epsilon",
        "1.5",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.starts_with("error:"), "stderr was {stderr:?}");
    assert!(stderr.contains("epsilon must be in [0,1]"));
    assert!(!out.exists());
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("syn.csv");
    let r = consynth(&[
        "synth",
        "--train",
        "/nonexistent.csv",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));
}

#[test]
fn grid_cap_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_toy(dir.path(), "toy.csv", "50", "1");
    let out = dir.path().join("syn.csv");
    let r = consynth(&[
        "synth",
        "--train",
        path_str(&train),
        "--grid-step",
        "0.0001",
        "--grid-cap",
        "10000",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("cap"), "stderr was {stderr:?}");
}

#[test]
fn split_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_toy(dir.path(), "toy.csv", "60", "3");
    let proper = dir.path().join("proper.csv");
    let calib = dir.path().join("calib.csv");
    let r = consynth(&[
        "split",
        "--train",
        path_str(&train),
        "--calib-fraction",
        "0.5",
        "--seed",
        "3",
        "--out-proper",
        path_str(&proper),
        "--out-calib",
        path_str(&calib),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let n_p = std::fs::read_to_string(&proper).unwrap().lines().count() - 1;
    let n_c = std::fs::read_to_string(&calib).unwrap().lines().count() - 1;
    assert_eq!(n_p + n_c, 60);
}

#[test]
fn score_grid_emits_field() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_toy(dir.path(), "toy.csv", "60", "3");
    let field = dir.path().join("field.csv");
    let r = consynth(&[
        "score-grid",
        "--train",
        path_str(&train),
        "--grid-step",
        "0.25",
        "--seed",
        "3",
        "--field-out",
        path_str(&field),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let text = std::fs::read_to_string(&field).unwrap();
    assert!(text.starts_with("flat_index,x0,x1,p0,p1\n"));
}

#[test]
fn eval_emits_schema_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let orig = gen_toy(dir.path(), "orig.csv", "60", "1");
    let test = gen_toy(dir.path(), "test.csv", "60", "2");
    let syn = dir.path().join("syn.csv");
    let r = consynth(&[
        "synth",
        "--train",
        path_str(&orig),
        "--epsilon",
        "0.9",
        "--grid-step",
        "0.1",
        "--seed",
        "1",
        "--pvalue-direction",
        "standard-ge",
        "--out",
        path_str(&syn),
    ]);
    assert!(r.status.success());

    let r = consynth(&[
        "eval",
        "--orig",
        path_str(&orig),
        "--syn",
        path_str(&syn),
        "--test",
        path_str(&test),
        "--repeats",
        "2",
        "--seed",
        "7",
        "--epochs",
        "50",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    // golden schema shape
    assert_eq!(report["config"]["repeats"], 2);
    assert_eq!(report["config"]["classifier"], "softmax_linear");
    let has_syn = !report["summary"]["train_syn"].is_null();
    let arms = if has_syn { 3 } else { 2 };
    assert_eq!(report["runs"].as_array().unwrap().len(), 2 * arms);
    let mut keys = vec!["train_orig", "train_ext"];
    if has_syn {
        keys.push("train_syn");
    }
    for key in keys {
        let s = &report["summary"][key];
        assert!(s["f1_mean"].is_number(), "missing f1_mean under {key}");
        assert!(s["f1_std"].is_number());
        assert!(s["precision_mean"].is_number());
        assert!(s["recall_mean"].is_number());
        let pc = s["per_class"].as_array().unwrap();
        assert_eq!(pc.len(), 2);
        assert!(pc[0]["recall_mean"].is_number());
    }
}

#[test]
fn minority_only_and_dedupe_flags() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_toy(dir.path(), "toy.csv", "80", "5");
    let syn = dir.path().join("syn.csv");
    let r = consynth(&[
        "synth",
        "--train",
        path_str(&train),
        "--epsilon",
        "0.8",
        "--grid-step",
        "0.1",
        "--seed",
        "5",
        "--pvalue-direction",
        "standard-ge",
        "--minority-only",
        "0",
        "--dedupe",
        "--out",
        path_str(&syn),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let text = std::fs::read_to_string(&syn).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",0"), "non-minority row {line:?}");
    }
    let regions: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("syn.regions.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(regions["per_class"][1]["synth_count"], 0);
    assert!(regions["per_class"][1]["region_size"].as_u64().unwrap() > 0);
}

#[test]
fn version_prints_toy_tag() {
    let r = consynth(&["version"]);
    assert_eq!(r.status.code(), Some(0));
    let out = String::from_utf8_lossy(&r.stdout);
    assert!(out.contains("toy-v1"), "version output was {out:?}");
}

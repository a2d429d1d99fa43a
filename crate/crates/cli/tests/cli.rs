use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use octwin::hash::sha256_hex;
use tempfile::TempDir;

fn octwin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octwin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = octwin(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_string).collect()
}

fn digest(path: &Path) -> String {
    sha256_hex(&fs::read(path).unwrap())
}

#[test]
fn default_generate_writes_2500_rows_and_split() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--out", "g"]);
    let g = d.path().join("g");
    assert_eq!(rows(&g.join("dataset.csv")), 2500);
    assert_eq!(rows(&g.join("train.csv")), 1750);
    assert_eq!(rows(&g.join("test.csv")), 750);
    assert!(g.join("dataset.csv.meta.json").exists());
    assert!(g.join("manifest.json").exists());
}

#[test]
fn noise_free_single_draw_has_one_row_per_model() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "1", "--variance", "0", "--out", "g"]);
    assert_eq!(rows(&d.path().join("g/dataset.csv")), 25);
}

#[test]
fn candidate_layout_has_67_feature_columns() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--layout", "candidate", "--s", "2", "--out", "g"]);
    let gauges = header(&d.path().join("g/dataset.csv"))
        .iter()
        .filter(|c| c.starts_with("gauge_"))
        .count();
    assert_eq!(gauges, 67);
}

#[test]
fn noise_free_depth_5_axis_tree_separates_training_rows() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "1", "--variance", "0", "--out", "g"]);
    for target in ["mu1", "mu2"] {
        let out = format!("t_{target}");
        ok(
            d.path(),
            &["train", "--dataset", "g/dataset.csv", "--target", target, "--depth", "5", "--split-complexity", "1", "--out", &out],
        );
        let rep: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join(&out).join("eval_train.json")).unwrap()).unwrap();
        assert_eq!(rep["train"]["n_misclassified"], 0, "{target}");
    }
}

#[test]
fn eval_rejects_feature_mismatch_without_output() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "2", "--out", "g"]);
    ok(d.path(), &["generate", "--s", "2", "--layout", "candidate", "--out", "c"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu1", "--restarts", "2", "--out", "t"]);
    let out = octwin(d.path(), &["eval", "--tree", "t/tree.json", "--dataset", "c/dataset.csv", "--out", "e"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
    assert!(!d.path().join("e").exists());
}

#[test]
fn eval_rejects_wrong_target() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "2", "--out", "g"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu1", "--restarts", "2", "--out", "t"]);
    let out = octwin(d.path(), &["eval", "--tree", "t/tree.json", "--dataset", "g/test.csv", "--target", "mu2", "--out", "e"]);
    assert!(!out.status.success());
    assert!(!d.path().join("e").exists());
}

#[test]
fn missing_input_is_a_descriptive_error() {
    let d = TempDir::new().unwrap();
    let out = octwin(d.path(), &["train", "--dataset", "nope.csv", "--target", "mu1", "--out", "t"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn invalid_config_values_fail() {
    let d = TempDir::new().unwrap();
    let out = octwin(d.path(), &["generate", "--variance", "-1", "--out", "g"]);
    assert!(!out.status.success());
    let out = octwin(d.path(), &["train", "--dataset", "x.csv", "--target", "mu3"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(d.path().join("bad.json"), r#"{"trian": {}}"#).unwrap();
    let out = octwin(d.path(), &["generate", "--config", "bad.json", "--out", "g"]);
    assert!(!out.status.success());
}

#[test]
fn flags_override_config_file() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("cfg.json"), r#"{"generate": {"s": 3, "variance": 0.0}}"#).unwrap();
    ok(d.path(), &["generate", "--config", "cfg.json", "--out", "a"]);
    assert_eq!(rows(&d.path().join("a/dataset.csv")), 75);
    ok(d.path(), &["generate", "--config", "cfg.json", "--s", "2", "--out", "b"]);
    assert_eq!(rows(&d.path().join("b/dataset.csv")), 50);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("b/dataset.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["noise_variance"], 0.0);
}

#[test]
fn simulate_twice_gives_identical_logs() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "4", "--out", "g"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu1", "--restarts", "2", "--out", "t1"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu2", "--restarts", "2", "--out", "t2"]);
    for out in ["s1", "s2"] {
        ok(
            d.path(),
            &["simulate", "--tree-mu1", "t1/tree.json", "--tree-mu2", "t2/tree.json", "--seed", "7", "--out", out],
        );
    }
    assert_eq!(
        fs::read(d.path().join("s1/mission_log.csv")).unwrap(),
        fs::read(d.path().join("s2/mission_log.csv")).unwrap()
    );
    assert_eq!(rows(&d.path().join("s1/mission_log.csv")), 100);
}

#[test]
fn simulate_rejects_swapped_trees() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "2", "--out", "g"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu1", "--restarts", "1", "--out", "t1"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu2", "--restarts", "1", "--out", "t2"]);
    let out = octwin(d.path(), &["simulate", "--tree-mu1", "t2/tree.json", "--tree-mu2", "t1/tree.json", "--out", "s"]);
    assert!(!out.status.success());
}

#[test]
fn explain_prints_the_decision_path() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "2", "--out", "g"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu2", "--depth", "2", "--restarts", "2", "--out", "t"]);
    let text = ok(d.path(), &["explain", "--tree", "t/tree.json", "--dataset", "g/test.csv", "--row", "3", "--out", "x"]);
    assert!(text.contains("gauge_"));
    assert!(text.contains("leaf: class"));
    let out = octwin(d.path(), &["explain", "--tree", "t/tree.json", "--dataset", "g/test.csv", "--row", "9999", "--out", "y"]);
    assert!(!out.status.success());
}

#[test]
fn commands_do_not_modify_inputs() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "2", "--out", "g"]);
    let inputs = ["g/train.csv", "g/train.csv.meta.json", "g/test.csv"];
    let before: Vec<String> = inputs.iter().map(|p| digest(&d.path().join(p))).collect();
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu1", "--restarts", "2", "--out", "t"]);
    ok(d.path(), &["eval", "--tree", "t/tree.json", "--dataset", "g/test.csv", "--out", "e"]);
    ok(
        d.path(),
        &["sweep", "--dataset", "g/train.csv", "--test-dataset", "g/test.csv", "--target", "mu1", "--depths", "1,2", "--complexities", "1,2", "--restarts", "1", "--out", "s"],
    );
    let after: Vec<String> = inputs.iter().map(|p| digest(&d.path().join(p))).collect();
    assert_eq!(before, after);
}

#[test]
fn replay_reproduces_and_detects_changed_inputs() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "3", "--out", "g"]);
    ok(d.path(), &["train", "--dataset", "g/train.csv", "--target", "mu2", "--restarts", "3", "--out", "t"]);
    ok(d.path(), &["replay", "--manifest", "t/manifest.json", "--out", "r"]);
    for f in ["tree.json", "train_report.json", "eval_train.json", "manifest.json"] {
        assert_eq!(digest(&d.path().join("t").join(f)), digest(&d.path().join("r").join(f)), "{f}");
    }
    let ds = d.path().join("g/train.csv");
    let mut text = fs::read_to_string(&ds).unwrap();
    text.push('\n');
    fs::write(&ds, text).unwrap();
    let out = octwin(d.path(), &["replay", "--manifest", "t/manifest.json", "--out", "r2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
    assert!(!d.path().join("r2").exists());
}

#[test]
fn manifest_records_resolved_config_and_hashes() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["generate", "--s", "2", "--out", "g"]);
    ok(
        d.path(),
        &["train", "--dataset", "g/train.csv", "--target", "mu1", "--depth", "4", "--split-complexity", "unlimited", "--alpha", "0.01", "--restarts", "2", "--out", "t"],
    );
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("t/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["job"]["command"], "train");
    assert_eq!(m["job"]["config"]["max_depth"], 4);
    assert_eq!(m["job"]["config"]["alpha"], 0.01);
    assert_eq!(m["job"]["split_complexity"], "unlimited");
    assert_eq!(m["inputs"][0]["sha256"], digest(&d.path().join("g/train.csv")).as_str());
    assert_eq!(m["volatile"][0], "timing.json");
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert!(outputs.contains(&"tree.json"));
    assert!(!outputs.contains(&"timing.json"));
}

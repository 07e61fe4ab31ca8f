//! End-to-end runs of the `demospec` binary on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny.toml")
}

fn demospec(args: &[&str], out: Option<&Path>, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demospec"));
    cmd.args(args).arg("--config").arg(tiny_config()).env_remove("DEMOSPEC_OUT").env("RUST_LOG", "warn");
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    if let Some(o) = env_out {
        cmd.env("DEMOSPEC_OUT", o);
    }
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "demospec {args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn assert_files(root: &Path, rel: &[&str]) {
    for r in rel {
        assert!(root.join(r).is_file(), "missing {}", root.join(r).display());
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    demospec(&["gen-data"], Some(root), None);
    assert_files(root, &["data/dataset.jsonl", "data/config.toml"]);
    demospec(&["train", "--type", "normal"], Some(root), None);
    assert_files(root, &["models/normal_full_k4.ckpt", "models/normal_full_k4_curve.csv"]);
    demospec(&["eval", "--type", "careful", "--ablation", "full"], Some(root), None);
    demospec(&["refine", "--type", "normal"], Some(root), None);
    demospec(&["causal", "--type", "aggressive"], Some(root), None);
    demospec(&["fit-thresholds", "--type", "careful"], Some(root), None);
    assert_files(
        root,
        &[
            "reports/learning_curve.csv",
            "reports/learning_curve_runs.csv",
            "reports/refine.csv",
            "reports/refine_traces.csv",
            "reports/causal.csv",
            "reports/causal.txt",
            "reports/thresholds.csv",
            "reports/envelope_curve.csv",
            "reports/cost_map.csv",
            "reports/config.toml",
        ],
    );
    let report = demospec(&["report"], Some(root), None);
    assert!(root.join("reports/report.txt").is_file());
    assert!(!report.stdout.is_empty());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    demospec(&["gen-data"], None, Some(dir.path()));
    assert_files(dir.path(), &["data/dataset.jsonl"]);
}

#[test]
fn traj_per_scene_flag_controls_generation() {
    let dir = tempfile::tempdir().unwrap();
    demospec(&["gen-data", "--traj-per-scene", "3"], Some(dir.path()), None);
    let ds = demospec::io::read_dataset(&dir.path().join("data/dataset.jsonl")).unwrap();
    assert_eq!(ds.demos.len(), 3 * 7 * 3);
}

#[test]
fn fit_thresholds_reads_an_imported_demo_file() {
    let dir = tempfile::tempdir().unwrap();
    let demos = dir.path().join("demos.jsonl");
    std::fs::write(
        &demos,
        "{\"scene\":{\"objects\":[{\"kind\":\"glass\",\"x\":50,\"y\":50}]},\"trajectory\":[[10,10],[10,90],[90,90]],\"valid\":true}\n\
         {\"scene\":{\"objects\":[{\"kind\":\"glass\",\"x\":50,\"y\":50}]},\"trajectory\":[[10,10],[50,50],[90,90]],\"valid\":false}\n",
    )
    .unwrap();
    demospec(&["fit-thresholds", "--demos", demos.to_str().unwrap()], Some(dir.path()), None);
    let csv = std::fs::read_to_string(dir.path().join("reports/thresholds.csv")).unwrap();
    assert!(csv.lines().count() >= 2, "{csv}");
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_demospec"))
        .args(["train", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
    let out = Command::new(env!("CARGO_BIN_EXE_demospec")).args(["eval", "--type", "reckless"]).output().unwrap();
    assert!(!out.status.success());
}

//! Binary-level tests: exit codes, file artifacts, determinism of emitted
//! CSVs.

use std::path::Path;
use std::process::Command;

fn grawa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grawa"))
}

fn minimal_quadratic_config(seed: u64) -> serde_json::Value {
    serde_json::json!({
        "objective": {"kind": "quadratic", "dim": 4, "noise_sigma": 0.1},
        "policy": {"policy": "mgrawa", "lambda": 0.3, "tau": 8, "mu": 0.05},
        "local_opt": {"eta": 0.05},
        "workers": 4,
        "total_steps": 64,
        "batch_size": 8,
        "schedule": {"kind": "jittered", "max_skew": 2},
        "seed": seed
    })
}

fn write_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

#[test]
fn run_smoke_creates_artifacts_and_summary_has_final_loss() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &minimal_quadratic_config(7));
    let out = dir.path().join("out");
    let status = grawa()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("trajectory.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["final_worker_losses"].as_array().unwrap().len(), 4);
    assert!(summary["final_worker_losses"][0].as_f64().unwrap().is_finite());
}

#[test]
fn same_config_twice_is_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &minimal_quadratic_config(9));
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        let status = grawa()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(out_a.join("trajectory.csv")).unwrap();
    let b = std::fs::read(out_b.join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_lambda_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = minimal_quadratic_config(1);
    bad["policy"]["lambda"] = serde_json::json!(1.5);
    let cfg = write_config(dir.path(), &bad);
    let output = grawa()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("lambda"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = minimal_quadratic_config(1);
    bad["pulling"] = serde_json::json!(0.1);
    let cfg = write_config(dir.path(), &bad);
    let output = grawa()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("pulling"));
}

#[test]
fn numeric_blowup_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = minimal_quadratic_config(1);
    cfg["local_opt"]["eta"] = serde_json::json!(1e200);
    let path = write_config(dir.path(), &cfg);
    let output = grawa()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn seed_and_steps_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &minimal_quadratic_config(7));
    let out = dir.path().join("out");
    let status = grawa()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "21", "--steps", "16", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 21);
    assert_eq!(summary["total_steps"], 16);
}

#[test]
fn vincent_single_cell_emits_one_trajectory_of_four_workers() {
    let dir = tempfile::tempdir().unwrap();
    let status = grawa()
        .args(["vincent", "--policy", "mgrawa", "--seed", "5", "--steps", "200", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let run_dirs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(run_dirs.len(), 1, "exactly one trajectory directory");
    let rows = grawa_core::harness::read_trajectory_csv(
        &run_dirs[0].path().join("trajectory.csv"),
    )
    .unwrap();
    let workers: std::collections::BTreeSet<usize> =
        rows.iter().map(|r| r.worker_id).collect();
    assert_eq!(workers.len(), 4);
}

#[test]
fn sweep_writes_index_rows_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = serde_json::json!({
        "base": minimal_quadratic_config(3),
        "policies": ["easgd", "lsgd"],
        "seeds": [1, 2],
        "taus": [4, 8]
    });
    let cfg = dir.path().join("sweep.json");
    std::fs::write(&cfg, serde_json::to_string(&sweep).unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = grawa()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let index = std::fs::read_to_string(out.join("sweep_index.csv")).unwrap();
    // Header plus 2 policies x 2 seeds x 2 taus.
    assert_eq!(index.lines().count(), 1 + 8);
}

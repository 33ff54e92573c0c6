use std::path::{Path, PathBuf};
use std::process::Command;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use slide_cli::{cmd_count, cmd_decompose, RunConfig};
use slide_core::preprocess::write_csv_matrix;

fn slide() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slide"))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two views sharing one strong component, plus weak noise.
fn planted_views(dir: &Path) -> Vec<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 30;
    let score = Array2::from_shape_simple_fn((n, 1), || normal(&mut rng));
    let mut paths = Vec::new();
    for (i, p) in [6usize, 5].into_iter().enumerate() {
        let loading = Array2::from_shape_simple_fn((1, p), || normal(&mut rng));
        let noise = Array2::from_shape_simple_fn((n, p), || 0.05 * normal(&mut rng));
        let x = score.dot(&loading) * 3.0 + noise;
        let path = dir.join(format!("view{}.csv", i + 1));
        write_csv_matrix(&path, x.view()).unwrap();
        paths.push(path);
    }
    paths
}

fn config(views: Vec<PathBuf>, out: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::new("decompose", out);
    cfg.views = views;
    cfg.grid_length = 15;
    cfg.seed = 4;
    cfg
}

fn binomial(n: u128, k: u128) -> u128 {
    (1..=k).fold(1u128, |acc, i| acc * (n - k + i) / i)
}

#[test]
fn counts_structures() {
    assert_eq!(cmd_count(2, 2).unwrap(), "10");
    assert_eq!(cmd_count(1, 5).unwrap(), "6");
    assert_eq!(cmd_count(4, 100).unwrap(), binomial(115, 15).to_string());

    let out = slide().args(["count-structures", "3", "4"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), binomial(11, 7).to_string());
}

#[test]
fn planted_shared_component_is_found() {
    let dir = tempfile::tempdir().unwrap();
    let views = planted_views(dir.path());
    let out = dir.path().join("run");
    cmd_decompose(&config(views, out.clone())).unwrap();
    for f in ["model.json", "bcv_report.json", "candidates.json", "variance.json", "summary.txt", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    let structure = model["structure"].as_str().unwrap();
    assert!(structure.split(',').any(|c| c == "11"), "structure {structure}");
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("11 ") && !l.ends_with(" 0")), "{summary}");
}

#[test]
fn fixed_structure_skips_selection() {
    let dir = tempfile::tempdir().unwrap();
    let views = planted_views(dir.path());
    let out = dir.path().join("fixed");
    let status = slide()
        .arg("decompose")
        .args(views.iter().flat_map(|v| [PathBuf::from("--views"), v.clone()]))
        .args(["--structure", "11,10", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(!out.join("candidates.json").exists());
    assert!(!out.join("bcv_report.json").exists());
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["structure"], "11,10");
    assert_eq!(model["r"], 2);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let views = planted_views(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_decompose(&config(views.clone(), a.clone())).unwrap();
    cmd_decompose(&config(views, b.clone())).unwrap();
    for f in ["model.json", "bcv_report.json", "candidates.json", "variance.json", "manifest.json", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = slide().args(["simulate", "--generator", "case7", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let views = planted_views(dir.path());
    let out = slide()
        .arg("fit")
        .args(views.iter().flat_map(|v| [PathBuf::from("--views"), v.clone()]))
        .arg("--out")
        .arg(dir.path().join("fit"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = slide().args(["decompose", "--kr", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_view_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,x\n").unwrap();
    let good = planted_views(dir.path()).remove(0);
    let out_dir = dir.path().join("run");
    let out = slide()
        .arg("decompose")
        .arg("--views")
        .arg(&good)
        .arg("--views")
        .arg(&bad)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"failed\""));
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let views = planted_views(dir.path());
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "views = {}, {}\nstructure = 11\nseed = 3\nout = {}\n",
            views[0].display(),
            views[1].display(),
            dir.path().join("from-file").display()
        ),
    )
    .unwrap();
    let status = slide().arg("--config").arg(&cfg_path).args(["fit", "--seed", "8"]).status().unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("from-file/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 8);
    assert_eq!(manifest["config"]["structure"], "11");
}

#[test]
fn simulation_writes_one_row_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let status = slide()
        .args(["simulate", "--generator", "case1-s1", "--replications", "5", "--seed", "2", "--grid-length", "10", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("replications.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6, "{csv}");
    assert!(csv.starts_with("replication,seed,selected"));
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("experiment.json")).unwrap()).unwrap();
    assert_eq!(result["records"].as_array().unwrap().len(), 5);
}

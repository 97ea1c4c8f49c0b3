use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netalloc::formats::load_results;
use netalloc::io::load_edge_list;
use tempfile::TempDir;

fn netalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netalloc")).args(args).env_remove("NETALLOC_WORKERS").output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p
}

fn stage(name: &str, config: &Path) -> Output {
    netalloc(&[name, "--config", config.to_str().unwrap()])
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const SMALL_GRIDS: &str = r#"
[estimator]
learning_rates = [5e-3]
epochs = [20]

[tarnet]
learning_rates = [5e-3]
epochs = [20]
rep_layers = [1]
head_layers = [1]
"#;

#[test]
fn unknown_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run_id = \"x\"\nbeta_spilover = [0.3]\n");
    let out = stage("generate", &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta_spilover"));
}

#[test]
fn invalid_values_and_missing_files_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run_id = \"x\"\nk_pct = [150.0]\n");
    assert_eq!(stage("generate", &cfg).status.code(), Some(1));
    let cfg = write_config(
        dir.path(),
        "run_id = \"x\"\n[network]\nkind = \"files\"\ntrain = { edges = \"a.edges\" }\nvalid = { edges = \"b.edges\" }\ntest = { edges = \"c.edges\" }\n",
    );
    assert_eq!(stage("generate", &cfg).status.code(), Some(1));
    assert_eq!(netalloc(&["generate"]).status.code(), Some(1));
    assert_eq!(netalloc(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_worker_variable_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run_id = \"x\"\n");
    let out = Command::new(env!("CARGO_BIN_EXE_netalloc"))
        .args(["generate", "--config", cfg.to_str().unwrap()])
        .env("NETALLOC_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_upstream_stage_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run_id = \"x\"\nmethods = [\"deg\"]\n");
    for name in ["train", "allocate", "evaluate", "report"] {
        let out = stage(name, &cfg);
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("first"), "{name}");
    }
}

#[test]
fn spillover_outside_studied_range_only_warns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "run_id = \"w\"\nseeds = [0]\nbeta_spillover = [0.9]\n[network]\nkind = \"barabasi_albert\"\nn = 30\n",
    );
    let out = stage("generate", &cfg);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the studied range"));
}

#[test]
fn structure_only_methods_need_no_training() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
run_id = "ws"
seeds = [4]
k_pct = [10.0]
methods = ["deg", "sd", "celf", "random", "upper_bound"]
[network]
kind = "watts_strogatz"
n = 60
ring_degree = 4
[celf]
simulations = 50
"#,
    );
    assert_ok(&stage("generate", &cfg));
    let out = dir.path().join("out");
    for split in ["train", "valid", "test"] {
        let g = load_edge_list(out.join("seed-4").join(format!("{split}.edges"))).unwrap();
        assert_eq!(g.n(), 60);
        assert_eq!(g.edge_count(), 120);
    }
    assert_ok(&stage("allocate", &cfg));
    for m in ["deg", "sd", "celf", "random", "upper_bound"] {
        assert!(out.join("seed-4/beta-0.3/allocations").join(format!("{m}-k6.json")).is_file(), "{m}");
    }
    assert!(!out.join("seed-4/beta-0.3/netest").exists());
    assert_ok(&stage("evaluate", &cfg));
    let rows = load_results(out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.k == 6 && r.seconds.is_none()));
}

#[test]
fn estimator_grid_writes_every_checkpoint() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
run_id = "grid"
seeds = [1]
methods = ["greedy"]
[network]
kind = "barabasi_albert"
n = 40
[estimator]
learning_rates = [5e-3, 1e-3, 5e-4]
epochs = [5, 10, 15]
"#,
    );
    assert_ok(&stage("generate", &cfg));
    assert_ok(&stage("train", &cfg));
    let dir = dir.path().join("out/seed-1/beta-0.3/netest");
    let mut checkpoints: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && n != "selection.json")
        .collect();
    checkpoints.sort();
    assert_eq!(checkpoints.len(), 9, "{checkpoints:?}");
    let selection: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("selection.json")).unwrap()).unwrap();
    assert_eq!(selection["candidates"].as_array().unwrap().len(), 9);
    let chosen = selection["selected"].as_str().unwrap();
    assert!(checkpoints.iter().any(|c| c == chosen));
}

#[test]
fn zero_budget_random_run_is_trivial() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "run_id = \"zero\"\nseeds = [0]\nmethods = [\"random\"]\nk_pct = [0.0]\n[network]\nkind = \"barabasi_albert\"\nn = 50\n",
    );
    let out = netalloc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_ok(&out);
    let rows = load_results(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].k, 0);
    assert_eq!(rows[0].tte, 0.0);
    assert_eq!(rows[0].riseo, Some(1.0));
    assert_eq!(rows[0].liftup, None);
}

#[test]
fn report_writes_one_table_per_panel() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "run_id = \"rep\"\nseeds = [0, 1]\nbeta_spillover = [0.0, 0.3]\nk_pct = [5.0, 20.0]\n\
         methods = [\"greedy\", \"deg\", \"random\", \"upper_bound\"]\n\
         [network]\nkind = \"barabasi_albert\"\nn = 40\n{SMALL_GRIDS}"
    );
    let cfg = write_config(dir.path(), &body);
    assert_ok(&netalloc(&["run", "--config", cfg.to_str().unwrap()]));
    let report = dir.path().join("out/report");
    let mut names: Vec<String> =
        fs::read_dir(&report).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    let mut expected = vec![
        "liftup-vs-k-beta-0.csv".to_string(),
        "liftup-vs-k-beta-0.3.csv".to_string(),
        "liftup-vs-beta-k5.csv".to_string(),
        "liftup-vs-beta-k20.csv".to_string(),
        "similarity-beta-0-k5.csv".to_string(),
        "similarity-beta-0-k20.csv".to_string(),
        "similarity-beta-0.3-k5.csv".to_string(),
        "similarity-beta-0.3-k20.csv".to_string(),
    ];
    for seed in 0..2 {
        for split in ["train", "valid", "test"] {
            expected.push(format!("degree-histogram-seed-{seed}-{split}.csv"));
        }
    }
    expected.sort();
    assert_eq!(names, expected);
    let curve = fs::read_to_string(report.join("liftup-vs-k-beta-0.3.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 4 * 2);
    let sim = fs::read_to_string(report.join("similarity-beta-0.3-k5.csv")).unwrap();
    let header = sim.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 5);
}

#[test]
fn stage_commands_and_run_agree() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "run_id = \"eq\"\nseeds = [2]\nk_pct = [10.0]\nmethods = [\"greedy\", \"tarnet\", \"sd\"]\n\
         [network]\nkind = \"barabasi_albert\"\nn = 40\n{SMALL_GRIDS}"
    );
    let cfg = write_config(dir.path(), &body);
    for name in ["generate", "train", "allocate", "evaluate", "report"] {
        assert_ok(&stage(name, &cfg));
    }
    let staged = fs::read(dir.path().join("out/results.csv")).unwrap();
    let other = dir.path().join("other");
    assert_ok(&netalloc(&["run", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap()]));
    assert_eq!(staged, fs::read(other.join("results.csv")).unwrap());

    let manifest = other.join("manifest.json");
    let replayed = dir.path().join("replayed");
    let out = netalloc(&["--workers", "3", "run", "--manifest", manifest.to_str().unwrap(), "--out", replayed.to_str().unwrap()]);
    assert_ok(&out);
    assert_eq!(staged, fs::read(replayed.join("results.csv")).unwrap());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(replayed.join("manifest.json")).unwrap()).unwrap();
    let stages = m["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 5);
    for s in stages {
        for o in s["outputs"].as_array().unwrap() {
            assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
            assert!(replayed.join(o["path"].as_str().unwrap()).is_file());
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn meshgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshgnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL_RUN: &str = r#"
seed = 5

[mesh]
fixed_face = "z-"
grid = { nx = 3, ny = 3, nz = 3, spacing = 5.0 }

[dataset]
selection = { mode = "random_nodes", count = 2 }
directions = 2
steps = 3
total_force = 0.05

[model]
layers = [
  { kind = "graphconv", aggregator = "max", width = 4 },
  { kind = "graphsage", aggregator = "max", width = 4 },
]
jk_hidden = 4
head_width = 8

[train]
max_epochs = 3
"#;

#[test]
fn mesh_gen_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cube");
    let o = meshgnn(&["mesh", "gen", "--nx", "2", "--ny", "2", "--nz", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("8 nodes") && text.contains("6 tets"), "{text}");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["points"], 8);
    assert_eq!(summary["tetrahedra"], 6);

    let again = tmp.path().join("imported");
    let o = meshgnn(&[
        "mesh",
        "import",
        "--node",
        p(&out.join("mesh.node")),
        "--ele",
        p(&out.join("mesh.ele")),
        "--out",
        p(&again),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        fs::read(out.join("mesh.ele")).unwrap(),
        fs::read(again.join("mesh.ele")).unwrap()
    );
}

#[test]
fn missing_mesh_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meshgnn(&[
        "mesh",
        "import",
        "--node",
        p(&tmp.path().join("absent.node")),
        "--ele",
        p(&tmp.path().join("absent.ele")),
        "--out",
        p(&tmp.path().join("m")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("m").exists());
}

#[test]
fn dry_run_counts_reference_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "ref.toml",
        r#"
[mesh]
grid = { nx = 5, ny = 5, nz = 5, spacing = 2.0 }

[dataset]
id = "single-node"
selection = { mode = "random_nodes", count = 11 }
directions = 15
steps = 30
total_force = 1.35
"#,
    );
    let o = meshgnn(&["simulate", "--config", p(&config), "--dry-run"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "4950 cases");
}

#[test]
fn tiny_spec_gives_five_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "tiny.toml",
        r#"
[mesh]
grid = { nx = 3, ny = 3, nz = 3, spacing = 5.0 }

[dataset]
selection = { mode = "random_nodes", count = 1 }
directions = 1
steps = 5
total_force = 0.05
"#,
    );
    let out = tmp.path().join("data");
    let o = meshgnn(&["simulate", "--config", p(&config), "--out", p(&out)]);
    assert!(o.status.success(), "{o:?}");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sample_count"], 5);
    assert!(out.join("resolved-config.toml").exists());
    assert!(out.join("mesh.node").exists());
}

#[test]
fn conflicting_fixed_and_load_nodes_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.toml",
        r#"
[mesh]
grid = { nx = 3, ny = 3, nz = 3, spacing = 5.0 }
fixed_nodes = [0, 1, 2]
load_candidates = [2, 20, 26]

[dataset]
selection = { mode = "nodes", nodes = [20] }
directions = 1
steps = 5
total_force = 0.05
"#,
    );
    let out = tmp.path().join("data");
    let o = meshgnn(&["simulate", "--config", p(&config), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
    assert!(!out.exists());
    assert!(fs::read_dir(tmp.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn unknown_config_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "typo.toml", "[mesh]\ngird = 3\n");
    let o = meshgnn(&["simulate", "--config", p(&config), "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_is_deterministic_and_baselines_behave() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.toml", SMALL_RUN);
    let data = tmp.path().join("data");
    let o = meshgnn(&["simulate", "--config", p(&config), "--out", p(&data)]);
    assert!(o.status.success(), "{o:?}");

    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = meshgnn(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&out)]);
        assert!(o.status.success(), "{o:?}");
        let history = fs::read_to_string(out.join("history.jsonl")).unwrap();
        assert_eq!(history.lines().count(), 3);
        for line in history.lines() {
            let r: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(r["train_loss"].is_f64() && r["val_loss"].is_f64() && r["lr"].is_f64());
        }
        assert!(out.join("resolved-config.toml").exists());
        checkpoints.push(fs::read(out.join("model.ckpt")).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);

    let other = tmp.path().join("c");
    let o = meshgnn(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&other), "--seed", "6"]);
    assert!(o.status.success(), "{o:?}");
    assert_ne!(fs::read(other.join("model.ckpt")).unwrap(), checkpoints[0]);

    let eval_dir = tmp.path().join("oracle");
    let o = meshgnn(&["eval", "--data", p(&data), "--baseline", "oracle", "--out", p(&eval_dir)]);
    assert!(o.status.success(), "{o:?}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["euclidean_within_pct"], 100.0);
    assert_eq!(report["euclidean_mean"], 0.0);
    assert!(fs::read_to_string(eval_dir.join("metrics.txt")).unwrap().contains("100.00"));

    let ckpt = tmp.path().join("a").join("model.ckpt");
    let o = meshgnn(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt), "--split", "validation"]);
    assert!(o.status.success(), "{o:?}");

    let pred = tmp.path().join("pred");
    let o = meshgnn(&["predict", "--data", p(&data), "--checkpoint", p(&ckpt), "--sample", "2", "--vtk", "--out", p(&pred)]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(pred.join("prediction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 27);
    assert!(fs::read_to_string(pred.join("prediction.vtk")).unwrap().contains("POINTS 27"));

    let o = meshgnn(&["bench", "--data", p(&data), "--checkpoint", p(&ckpt), "--repeats", "20"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("20 runs") && text.contains('±'), "{text}");

    let o = meshgnn(&["bench", "--data", p(&data), "--checkpoint", p(&ckpt), "--repeats", "3"]);
    assert_eq!(o.status.code(), Some(2));

    let ablation = tmp.path().join("ablation");
    let o = meshgnn(&["ablate", "--config", p(&config), "--data", p(&data), "--max-epochs", "1", "--out", p(&ablation)]);
    assert!(o.status.success(), "{o:?}");
    let table = fs::read_to_string(ablation.join("ablation.txt")).unwrap();
    for name in ["baseline", "max->sum x1", "max->sum x2", "sage->conv x1"] {
        assert!(table.contains(name), "{table}");
    }
}

#[test]
fn missing_artifacts_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meshgnn(&["eval", "--data", p(&tmp.path().join("nothing")), "--baseline", "zero"]);
    assert_eq!(o.status.code(), Some(2));
    let o = meshgnn(&[
        "train",
        "--data",
        p(&tmp.path().join("nothing")),
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_breakdown_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "inverted.toml",
        r#"
[mesh]
grid = { nx = 2, ny = 2, nz = 3, spacing = 1.0 }

[materials.healthy]
density = 1.0
youngs_modulus = 3000.0
poisson_ratio = 0.45

[materials.tumour]
density = 1.0
youngs_modulus = 3000.0
poisson_ratio = 0.45

[dataset]
selection = { mode = "random_nodes", count = 1 }
directions = 1
steps = 1
total_force = 1000.0
oracle = { kind = "nonlinear", increments = 1 }
"#,
    );
    let out = tmp.path().join("data");
    let o = meshgnn(&["simulate", "--config", p(&config), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use disae::data::load_dataset;
use disae::model::load_checkpoint;

fn disae(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disae"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("DISAE_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(out: &Path, cmd: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("manifest-{cmd}.json"))).unwrap()).unwrap()
}

// quick model settings shared by the training commands
const QUICK: [&str; 6] = ["--set", "model.max_epochs=3", "--set", "probe.epochs=3", "--set", "variation.n_directions=64"];

#[test]
fn gen_data_writes_two_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = disae(dir.path(), &["gen-data", "A", "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (ds, _) = load_dataset(&a.path().join("a.csv")).unwrap();
    assert_eq!(ds.n_samples(), 13_000);
    for f in ["a.csv", "a.meta.json", "manifest-gen-data.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let m = manifest(a.path(), "gen-data");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"], serde_json::json!(["a.csv", "a.meta.json"]));
    assert!(m["dataset_format_version"].is_string());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = disae(out, &["gen-data", "Z"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown dataset"), "{}", stderr(&o));

    let o = disae(out, &["train", "--data", "no/such/file.csv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no/such/file.csv"));

    let o = disae(out, &["train", "--data", "A", "--set", "model.lamda=1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model.lamda"));

    fs::write(out.join("bad.toml"), "[model\n").unwrap();
    let bad = out.join("bad.toml");
    assert_eq!(code(&disae(out, &["train", "--data", "A", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&disae(out, &["sweep", "--data", "A", "--scale", "600"])), 2);
    assert_eq!(code(&disae(out, &["score", "--data", "A", "--checkpoint", "missing.ckpt"])), 2);
    assert_eq!(code(&disae(out, &[])), 2);
    assert_eq!(code(&disae(out, &["frobnicate"])), 2);
    assert_eq!(code(&disae(out, &["train"])), 2);
}

#[test]
fn corrupt_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let o = disae(dir.path(), &["score", "--data", "A", "--scale", "600", "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn train_score_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut args = vec!["train", "--data", "A", "--scale", "1300", "--vanilla"];
    args.extend(QUICK);
    let o = disae(out, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ckpt = load_checkpoint(&out.join("vanilla-ae.ckpt")).unwrap();
    assert!(ckpt.model.task_heads.is_empty() && ckpt.model.domain_heads.is_empty());
    assert!(out.join("vanilla-ae-history.csv").is_file());

    let mut args = vec!["train", "--data", "A", "--scale", "1300"];
    args.extend(QUICK);
    assert_eq!(code(&disae(out, &args)), 0);
    let ck = out.join("dis-ae.ckpt");
    let mut args = vec!["score", "--data", "A", "--scale", "1300", "--checkpoint", ck.to_str().unwrap()];
    args.extend(QUICK);
    let o = disae(out, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("{key} in {text}"));
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    let (acc, var, rec, score) = (value("accuracy"), value("variation"), value("reconstruction"), value("score"));
    assert!((acc - var - rec - score).abs() < 2e-4, "{text}");
    assert_eq!(manifest(out, "score")["config"]["variation"]["n_directions"], 64);

    let o = disae(out, &["export-latent", "--data", "A", "--scale", "1300", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (latent, _) = load_dataset(&out.join("latent.csv")).unwrap();
    assert_eq!(latent.n_samples(), 1300);
    assert_eq!(latent.n_features(), ckpt.model.config.latent_dim);
    let header = fs::read_to_string(out.join("latent.csv")).unwrap();
    assert!(header.lines().next().unwrap().starts_with("z0,z1"));
}

#[test]
fn eval_sweep_and_robustness_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    fs::write(
        out.join("run.toml"),
        "dataset = \"A\"\nscale = 1300\n[experiment]\nfolds = 2\n[sweep]\nlambda = [0.0, 1.0]\n[robustness]\nsource_counts = [2, 3]\n",
    )
    .unwrap();
    let cfg = out.join("run.toml");
    let with = |cmd: &[&str]| {
        let mut a = vec!["--config", cfg.to_str().unwrap()];
        a.extend(QUICK);
        a.extend(cmd);
        let o = disae(out, &a);
        assert_eq!(code(&o), 0, "{cmd:?}: {}", stderr(&o));
    };
    with(&["eval"]);
    for f in ["scores.csv", "folds.csv", "variation.csv", "probe.csv", "dis-ae.ckpt", "vanilla-ae.ckpt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 3);
    assert_eq!(manifest(out, "eval")["config"]["source_instances"], serde_json::json!([0, 1]));

    with(&["sweep"]);
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 3);

    with(&["robustness", "--data", "many-affines", "--scale", "1400", "--kind", "dis-ae"]);
    let grid = fs::read_to_string(out.join("robustness.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + (1 + 68) + (1 + 67));
    assert!(manifest(out, "robustness")["substitutions"][0].as_str().unwrap().contains("probe"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_disae"))
        .args(["gen-data", "B", "--scale", "400"])
        .env("DISAE_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(root.join("b.csv").is_file());
}

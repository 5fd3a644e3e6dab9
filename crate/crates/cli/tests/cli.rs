use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
mode = "full"

[data]
train_per_class = 60
val_per_class = 15
test_per_class = 20

[train]
warmup_epochs = 2
outer_iterations = 2
classification_epochs = 2

[hallucinator]
epochs = 2
"#;

fn nll(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nll")).args(args).output().expect("spawn nll")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_every_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("data");
    let o = nll(&["generate", "--config", &cfg, "--out", s(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for split in ["train", "val", "test"] {
        assert!(out.join(format!("{split}.nllc")).is_file());
        let csv = std::fs::read_to_string(out.join(format!("{split}.csv"))).unwrap();
        let per_class = match split {
            "train" => 60,
            "val" => 15,
            _ => 20,
        };
        assert_eq!(csv.lines().count(), 1 + 4 * per_class, "{split}");
    }
}

#[test]
fn eval_of_the_checkpoint_matches_the_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (run_dir, data_dir) = (dir.path().join("run"), dir.path().join("data"));
    let o = nll(&["run", "--config", &cfg, "--out", s(&run_dir), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&o.stdout);
    assert_eq!(summary["mode"], "full");
    for name in ["metrics.jsonl", "timings.jsonl", "checkpoint.nllc", "config.toml", "split.csv", "correction.csv"] {
        assert!(run_dir.join(name).is_file(), "{name}");
    }

    assert!(nll(&["generate", "--config", &cfg, "--out", s(&data_dir), "--quiet"]).status.success());
    let ckpt = run_dir.join("checkpoint.nllc");
    let o = nll(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data_dir.join("test.nllc"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = json(&o.stdout);
    assert_eq!(e["n"], 80);
    assert_eq!(e["accuracy"], summary["test_accuracy"]);
    assert_eq!(e["config_hash"], summary["config_hash"]);
}

#[test]
fn seed_and_mode_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    let o = nll(&["run", "--config", &cfg, "--seed", "9", "--mode", "baseline", "--out", s(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&o.stdout);
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["mode"], "baseline");
}

#[test]
fn export_embeddings_writes_a_container() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (run_dir, data_dir) = (dir.path().join("run"), dir.path().join("data"));
    assert!(nll(&["run", "--config", &cfg, "--out", s(&run_dir), "--quiet"]).status.success());
    assert!(nll(&["generate", "--config", &cfg, "--out", s(&data_dir), "--quiet"]).status.success());
    let target = dir.path().join("emb.nllc");
    let o = nll(&[
        "export-embeddings",
        "--checkpoint",
        s(&run_dir.join("checkpoint.nllc")),
        "--data",
        s(&data_dir.join("val.nllc")),
        "--out",
        s(&target),
        "--pairs",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::metadata(&target).unwrap().len() > 0);
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[sweep]\npercent = [40.0, 60.0]\nk = [5]\n");
    let out = dir.path().join("sweep");
    let o = nll(&["sweep", "--config", &cfg, "--out", s(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,40,") && rows[2].starts_with("1,60,"), "{table}");
    assert!(out.join("run-000/metrics.jsonl").is_file() && out.join("run-001/metrics.jsonl").is_file());
}

#[test]
fn missing_config_and_seed_is_a_usage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = nll(&["run", "--out", s(dir.path())]);
    assert!(!o.status.success());
    let f = json(o.stderr.trim_ascii());
    assert_eq!(f["kind"], "usage");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[ssl]\nwarp = 2\n");
    let o = nll(&["run", "--config", &cfg, "--out", s(&dir.path().join("run"))]);
    assert!(!o.status.success());
    let f = json(o.stderr.trim_ascii());
    assert!(f["message"].as_str().unwrap().contains("warp"), "{f}");
}

#[test]
fn eval_of_a_missing_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.nllc");
    let o = nll(&["eval", "--checkpoint", s(&missing), "--data", s(&missing)]);
    assert!(!o.status.success());
    let f = json(o.stderr.trim_ascii());
    assert!(f["kind"].is_string());
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skimread(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skimread")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, extra: serde_json::Value) -> String {
    let training = serde_json::json!({"lr": 5e-3, "max_epochs": 3, "patience": 2});
    let mut cfg = serde_json::json!({
        "data": {"synthetic": {"n_sentences": 200, "contrast_rate": 0.5, "seed": 2}},
        "dims": {"embedding_dim": 8, "bow_hidden": 16, "lstm_projection": 8, "lstm_hidden": 8,
                 "lstm_mlp_hidden": 16, "decision_hidden": 8},
        "bow_training": training,
        "lstm_training": training,
        "grid_size": 41,
        "out_dir": dir.join("out"),
    });
    cfg.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_succeeds() {
    let o = skimread(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["synth", "pipeline", "eval", "gradcheck", "timeit"] {
        assert!(stdout(&o).contains(cmd), "{cmd}");
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    assert_eq!(skimread(&["pipeline"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), serde_json::json!({"learning_rate": 0.1}));
    let o = skimread(&["pipeline", "--config", &config]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn synth_writes_treebank_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = skimread(&["synth", "--out", out.to_str().unwrap(), "--n", "100", "--seed", "3"]);
    assert!(o.status.success(), "{o:?}");
    for name in ["train.txt", "dev.txt", "test.txt"] {
        assert!(!fs::read_to_string(out.join(name)).unwrap().is_empty(), "{name}");
    }
    let bad = skimread(&["synth", "--out", out.to_str().unwrap(), "--contrast-rate", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let o = skimread(&["gradcheck", "--seeds", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let summary = stdout(&o).lines().last().unwrap().to_owned();
    let err: f64 = summary.rsplit('=').next().unwrap().parse().unwrap();
    assert!(summary.starts_with("seeds=20") && err < 1e-4, "{summary}");
}

#[test]
fn timeit_prints_ordered_costs() {
    let o = skimread(&["timeit", "--batches", "3"]);
    assert!(o.status.success(), "{o:?}");
    let costs: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let (b, l) = (costs["c_bow"].as_f64().unwrap(), costs["c_lstm"].as_f64().unwrap());
    assert!(0.0 < b && b < l, "{costs}");
}

#[test]
fn eval_reproduces_pipeline_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), serde_json::json!({}));
    let o = skimread(&["pipeline", "--config", &config, "--seed", "4"]);
    assert!(o.status.success(), "{o:?}");
    let out = dir.path().join("out");
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("split=")).count(), 6);

    let again = dir.path().join("again");
    let o = skimread(&[
        "eval",
        "--config",
        &config,
        "--seed",
        "4",
        "--checkpoints",
        out.join("checkpoints").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    for f in ["report.json", "valid/curve_prob_threshold.csv", "test/activations.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

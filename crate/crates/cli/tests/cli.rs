use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[dataset]
n_train = 240
n_val = 40
n_test = 40
n_novel = 20

[primary]
kind = "dnn"

[primary.sgd]
epochs = 2
batch_size = 16

[bank]
m = 20

[comparator.sgd]
epochs = 2

[evaluation]
bank_sizes = [8, 20]
"#;

fn relmem(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("tiny.toml");
    if !config.exists() {
        std::fs::write(&config, TINY).unwrap();
    }
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_relmem"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gen-data", "train-primary", "build-bank", "train-comparator", "evaluate"] {
        let o = relmem(dir.path(), &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(dir.path().join(format!("out/manifests/{cmd}.json")).is_file());
    }
    let o = relmem(dir.path(), &["sweep", "--bank-sizes"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gamma = std::fs::read_to_string(dir.path().join("out/gamma_sweep.csv")).unwrap();
    assert_eq!(gamma.lines().count(), 7);
    assert!(gamma.starts_with("sweep_param,novelty_detection_rate,false_positive_rate"));
    let m = std::fs::read_to_string(dir.path().join("out/bank_sweep.csv")).unwrap();
    assert_eq!(m.lines().count(), 3);

    let o = relmem(dir.path(), &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let md = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(md.starts_with("# relmem"));
    assert!(md.contains("| M |"));

    for f in [
        "data/train.rlds",
        "primary.rlnn",
        "bank.rbnk",
        "memory_graph.csv",
        "comparator.rlnn",
        "summary.json",
        "signatures.csv",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
    let sigs = std::fs::read_to_string(dir.path().join("out/signatures.csv")).unwrap();
    assert_eq!(sigs.lines().count(), 1 + 40 + 20);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifests/evaluate.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["version"], "v0.1.0");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn gen_data_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, ob) = (relmem(a.path(), &["gen-data"]), relmem(b.path(), &["gen-data"]));
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(stdout(&oa), stdout(&ob));
    assert!(stdout(&oa).contains("fingerprint"));
    let o = relmem(a.path(), &["gen-data", "--seed", "5"]);
    assert_ne!(stdout(&o), stdout(&ob));
}

#[test]
fn missing_upstream_artifact_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = relmem(dir.path(), &["train-primary"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("relmem gen-data"), "{}", stderr(&o));
    assert!(relmem(dir.path(), &["gen-data"]).status.success());
    let o = relmem(dir.path(), &["evaluate"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("relmem train-primary"), "{}", stderr(&o));
    let o = relmem(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("relmem evaluate"));
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), "[bank]\nm = 2\n").unwrap();
    let o = relmem(dir.path(), &["gen-data"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bank.m"), "{}", stderr(&o));
    std::fs::write(dir.path().join("tiny.toml"), "[dataset]\nnovel = \"triangle\"\n").unwrap();
    let o = relmem(dir.path(), &["gen-data"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset.novel"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = relmem(dir.path(), &["selftest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
    assert!(!text.contains("FAIL"));
}

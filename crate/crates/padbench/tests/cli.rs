//! End-to-end CLI tests: exit codes, stdout/stderr discipline, and the
//! fixture → ingest → validate → split → train → evaluate pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn padbench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_padbench"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    padbench()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stdout not JSON ({e}): {text}"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn no_arguments_is_usage_error() {
    let out = padbench().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = padbench().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = padbench().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("padbench"));
}

#[test]
fn audit_passes_on_reference_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "audit",
            "--apcer",
            data("wut_ear_apcer_accuracy.csv").to_str().unwrap(),
            "--hter",
            data("wut_ear_hter.csv").to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let findings = stdout_json(&out);
    assert_eq!(findings.as_array().unwrap().len(), 14);
}

#[test]
fn audit_fails_on_inconsistent_tables() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "key,value_percent\nX,50.0\n").unwrap();
    std::fs::write(dir.path().join("h.csv"), "key,value_percent\nX,10.0\n").unwrap();
    let out = run_in(dir.path(), &["audit", "--apcer", "a.csv", "--hter", "h.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconsistent"));
}

#[test]
fn evaluate_perfect_separation_scores() {
    let dir = tempfile::tempdir().unwrap();
    let scores = "\
sample_id,ground_truth,pais,score
a1,attack,Dell-GA7,1.0
a2,attack,Dell-GA7,0.98
b1,bonafide,,0.0
b2,bonafide,,0.03
";
    std::fs::write(dir.path().join("s.csv"), scores).unwrap();
    let out = run_in(dir.path(), &["evaluate", "--scores", "s.csv", "--tau", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["bpcer"], 0.0);
    assert_eq!(report["apcer_max"], 0.0);
    assert_eq!(report["per_pais"]["Dell-GA7"]["apcer"], 0.0);
}

#[test]
fn fixture_ingest_validate_split_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fixture", "--out", "fx", "--subjects", "4", "--per-subject", "4",
            "--pais", "Dell-GA7,Print-GA7", "--attacks-per-pais", "5",
            "--image-size", "32", "--seed", "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run_in(dir.path(), &["ingest", "--root", "fx", "--out", "scan.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["samples"], 16 + 10);
    assert_eq!(summary["skipped"], 0);

    // The scanned manifest equals the fixture's emitted ground truth.
    let scanned = std::fs::read_to_string(dir.path().join("scan.json")).unwrap();
    let emitted = std::fs::read_to_string(dir.path().join("fx/manifest.json")).unwrap();
    assert_eq!(scanned, emitted);

    let out = run_in(dir.path(), &["validate", "--manifest", "scan.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["pass"], true);

    let out = run_in(
        dir.path(),
        &[
            "split", "--manifest", "scan.json", "--mode", "loco",
            "--held-out", "Print-GA7", "--seed", "9",
            "--out-train", "train.json", "--out-test", "test.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let train_text = std::fs::read_to_string(dir.path().join("train.json")).unwrap();
    assert!(!train_text.contains("Print-GA7") || {
        // Catalog may mention the PAIS; no sample may carry it.
        let manifest: serde_json::Value = serde_json::from_str(&train_text).unwrap();
        manifest["samples"]
            .as_array()
            .unwrap()
            .iter()
            .all(|s| s["pais"] != "Print-GA7")
    });

    // Identical inputs and seed reproduce byte-identical outputs.
    let rerun_dir = dir.path().join("rerun");
    std::fs::create_dir(&rerun_dir).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "split", "--manifest", "scan.json", "--mode", "loco",
            "--held-out", "Print-GA7", "--seed", "9",
            "--out-train", "rerun/train.json", "--out-test", "rerun/test.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("train.json")).unwrap(),
        std::fs::read(dir.path().join("rerun/train.json")).unwrap()
    );
}

#[test]
fn split_loco_requires_held_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &["fixture", "--out", "fx", "--subjects", "2", "--per-subject", "2",
          "--pais", "Dell-GA7", "--attacks-per-pais", "2", "--image-size", "32", "--seed", "1"],
    );
    run_in(dir.path(), &["ingest", "--root", "fx", "--out", "m.json"]);
    let out = run_in(
        dir.path(),
        &["split", "--manifest", "m.json", "--mode", "loco",
          "--out-train", "t1.json", "--out-test", "t2.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--held-out"));
}

#[test]
fn report_writes_tables_and_csv_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let scores = "\
sample_id,ground_truth,pais,score
a1,attack,Dell-GA7,0.2
a2,attack,Dell-GA7,0.9
b1,bonafide,,0.1
";
    std::fs::write(dir.path().join("s.csv"), scores).unwrap();
    let out = run_in(
        dir.path(),
        &["report", "--scores", "s.csv", "--tau", "0.5", "--style", "accuracy", "--out", "rep"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("kind,key,n,apcer,bpcer,hter"), "{stdout}");
    let table = std::fs::read_to_string(dir.path().join("rep/table.txt")).unwrap();
    assert!(table.contains("50.00"), "{table}"); // 1 of 2 attacks missed → 50% accuracy
    assert!(dir.path().join("rep/table.csv").exists());
    // The legacy style name is accepted as an alias.
    let out = run_in(
        dir.path(),
        &["report", "--scores", "s.csv", "--style", "paper", "--out", "rep2"],
    );
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn run_manifest_written_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["one", "two"] {
        let subdir = dir.path().join(sub);
        std::fs::create_dir(&subdir).unwrap();
        let out = run_in(
            &subdir,
            &["fixture", "--out", "fx", "--subjects", "2", "--per-subject", "2",
              "--pais", "Dell-GA7", "--attacks-per-pais", "2", "--image-size", "32", "--seed", "5"],
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("one/fx/manifest.json.run.json")).unwrap();
    let b = std::fs::read(dir.path().join("two/fx/manifest.json.run.json")).unwrap();
    assert_eq!(a, b);
    let manifest: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert!(manifest["versions"]["padbench"].is_string());
}

#[test]
fn train_evaluate_visualize_smoke() {
    let dir = tempfile::tempdir().unwrap();
    // Small backbone keeps this test quick while exercising the full path.
    let out = run_in(
        dir.path(),
        &["backbone", "--out", "bb.padbench", "--seed", "11", "--width-multiplier", "0.25"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    run_in(
        dir.path(),
        &["fixture", "--out", "fx", "--subjects", "2", "--per-subject", "3",
          "--pais", "Dell-GA7", "--attacks-per-pais", "6", "--image-size", "32", "--seed", "2"],
    );
    run_in(dir.path(), &["ingest", "--root", "fx", "--out", "m.json"]);

    let config = "\
schema_version = 1
variant = \"padnet1\"
epochs = 2
batch_size = 6
seed = 4
backbone = \"bb.padbench\"
";
    std::fs::write(dir.path().join("train.toml"), config).unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--manifest", "m.json", "--config", "train.toml", "--out", "model.padbench"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["epochs"], 2);

    let out = run_in(
        dir.path(),
        &["evaluate", "--model", "model.padbench", "--manifest", "m.json",
          "--tau", "0.5", "--scores-out", "scores.csv"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("scores.csv").exists());
    let report = stdout_json(&out);
    assert!(report["per_pais"]["Dell-GA7"]["apcer"].is_number());

    let out = run_in(
        dir.path(),
        &["visualize", "--manifest", "m.json", "--backbone", "bb.padbench",
          "--method", "pca", "--out", "plot.png", "--seed", "1"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("plot.png").metadata().unwrap().len() > 0);

    // Identical inputs and seed reproduce byte-identical model files.
    let out = run_in(
        dir.path(),
        &["train", "--manifest", "m.json", "--config", "train.toml", "--out", "model2.padbench"],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("model.padbench")).unwrap(),
        std::fs::read(dir.path().join("model2.padbench")).unwrap(),
        "training is not byte-deterministic"
    );

    // The backbone checkpoint resolves through PADBENCH_CACHE.
    std::fs::create_dir(dir.path().join("cache")).unwrap();
    std::fs::copy(
        dir.path().join("bb.padbench"),
        dir.path().join("cache/backbone.padbench"),
    )
    .unwrap();
    let out = padbench()
        .current_dir(dir.path())
        .env("PADBENCH_CACHE", dir.path().join("cache"))
        .args(["gradcheck", "--manifest", "m.json", "--variant", "padnet1",
               "--count", "3", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // Config file with wrong schema version is rejected.
    std::fs::write(dir.path().join("bad.toml"), "schema_version = 9\n").unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--manifest", "m.json", "--config", "bad.toml", "--out", "x.padbench"],
    );
    assert_eq!(out.status.code(), Some(1));

    // Missing backbone checkpoint is a configuration error (exit 1).
    let out = padbench()
        .current_dir(dir.path())
        .env_remove("PADBENCH_CACHE")
        .args(["train", "--manifest", "m.json", "--variant", "padnet1", "--out", "x.padbench"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("backbone"));
}

//! Black-box tests of the command-line interface: exit codes, usage errors,
//! config-file merging, and the end-to-end pipeline.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use anybow::dataset::Dataset;

fn anybow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anybow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn anybow")
}

fn expect_ok(dir: &Path, args: &[&str]) -> Output {
    let out = anybow(dir, args);
    assert!(
        out.status.success(),
        "anybow {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn synth_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.bowd", "b.bowd"] {
        expect_ok(
            dir.path(),
            &[
                "synth", "--num-images", "30", "--features-per-image", "20", "--dimension",
                "8", "--num-clusters", "32", "--seed", "7", "--out", out,
            ],
        );
    }
    assert_eq!(
        std::fs::read(dir.path().join("a.bowd")).unwrap(),
        std::fs::read(dir.path().join("b.bowd")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.bowd.gt.csv")).unwrap(),
        std::fs::read(dir.path().join("b.bowd.gt.csv")).unwrap()
    );
}

#[test]
fn bench_without_index_exits_1_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = anybow(dir.path(), &["bench", "--vocab", "v", "--dataset", "d"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--index"), "stderr: {stderr}");
    assert!(stderr.contains("usage:"), "stderr: {stderr}");
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = anybow(
        dir.path(),
        &["train-vocab", "--input", "nope.bowd", "--k", "4", "--out", "v.bowv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.bowd"), b"JUNKDATA").unwrap();
    let out = anybow(
        dir.path(),
        &["train-vocab", "--input", "bad.bowd", "--k", "4", "--out", "v.bowv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_rule_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = anybow(
        dir.path(),
        &[
            "query", "--index", "i", "--vocab", "v", "--dataset", "d", "--query-id", "1",
            "--rule", "rule9",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = anybow(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("synth"));
}

#[test]
fn config_file_supplies_flags_and_cli_wins() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{
            "num_images": 24,
            "features_per_image": 15,
            "dimension": 4,
            "num_clusters": 24,
            "hard_fraction": 0.0,
            "confuser_count": 2,
            "sigma": 0.05,
            "seed": 3,
            "out": "from_config.bowd"
        }"#,
    )
    .unwrap();

    // Everything from the config file.
    expect_ok(dir.path(), &["synth", "--config", "cfg.json"]);
    let ds = Dataset::load(&dir.path().join("from_config.bowd")).unwrap();
    assert_eq!(ds.num_images(), 24);
    assert_eq!(ds.dimension, 4);

    // Command-line flags override config values.
    expect_ok(
        dir.path(),
        &[
            "synth", "--config", "cfg.json", "--num-images", "30", "--out", "override.bowd",
        ],
    );
    let ds = Dataset::load(&dir.path().join("override.bowd")).unwrap();
    assert_eq!(ds.num_images(), 30);
}

#[test]
fn end_to_end_pipeline_recall_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    expect_ok(
        dir.path(),
        &[
            "synth", "--num-images", "40", "--features-per-image", "30", "--dimension", "8",
            "--num-clusters", "48", "--hard-fraction", "0", "--seed", "5", "--out", "ds.bowd",
        ],
    );
    expect_ok(
        dir.path(),
        &["train-vocab", "--input", "ds.bowd", "--k", "32", "--seed", "2", "--out", "v.bowv"],
    );
    expect_ok(
        dir.path(),
        &["build-index", "--vocab", "v.bowv", "--input", "ds.bowd", "--out", "ix.bowi"],
    );
    let out = expect_ok(
        dir.path(),
        &[
            "bench", "--index", "ix.bowi", "--vocab", "v.bowv", "--dataset", "ds.bowd",
            "--rules", "never", "--n", "1", "--runs", "2", "--seed", "9", "--precision-floor",
            "0",
        ],
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row = stdout.lines().nth(1).expect("one report row");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "never");
    let recall: f64 = fields[3].parse().unwrap();
    let mean_fraction: f64 = fields[5].parse().unwrap();
    assert_eq!(mean_fraction, 1.0);

    // Independent oracle over the same artifacts: top-1 hit rate against the
    // planted ground truth.
    let ds = Dataset::load(&dir.path().join("ds.bowd")).unwrap();
    let vocab = anybow::Vocabulary::load(&dir.path().join("v.bowv")).unwrap();
    let db_ids: Vec<u32> = ds.database().iter().map(|im| im.image_id).collect();
    let mut hits = 0usize;
    for query in ds.queries() {
        let oracle = common::oracle_cosine_rank(&vocab, ds.database(), query);
        let top = db_ids[oracle[0] as usize];
        if ds.ground_truth[&query.image_id].contains(&top) {
            hits += 1;
        }
    }
    let oracle_recall = hits as f64 / ds.queries().len() as f64;
    assert_eq!(
        recall, oracle_recall,
        "bench recall@1 disagrees with the oracle script"
    );
    assert!(oracle_recall >= 0.9, "generator separability off: {oracle_recall}");
}

#[test]
fn query_trace_has_a_row_per_processed_feature() {
    let dir = tempfile::tempdir().unwrap();
    expect_ok(
        dir.path(),
        &[
            "synth", "--num-images", "20", "--features-per-image", "25", "--dimension", "6",
            "--num-clusters", "24", "--hard-fraction", "0", "--seed", "4", "--out", "ds.bowd",
        ],
    );
    expect_ok(
        dir.path(),
        &["train-vocab", "--input", "ds.bowd", "--k", "16", "--seed", "1", "--out", "v.bowv"],
    );
    expect_ok(
        dir.path(),
        &["build-index", "--vocab", "v.bowv", "--input", "ds.bowd", "--out", "ix.bowi"],
    );
    expect_ok(
        dir.path(),
        &[
            "query", "--index", "ix.bowi", "--vocab", "v.bowv", "--dataset", "ds.bowd",
            "--query-id", "15", "--rule", "never", "--n", "3", "--seed", "8", "--trace",
            "trace.csv",
        ],
    );
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "step,word_id,argmax,gap,max,mean");
    assert_eq!(lines.len(), 26, "header plus one row per feature");
}

#[test]
fn no_subcommand_mutates_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    expect_ok(
        dir.path(),
        &[
            "synth", "--num-images", "20", "--features-per-image", "15", "--dimension", "4",
            "--num-clusters", "24", "--hard-fraction", "0", "--seed", "1", "--out", "ds.bowd",
        ],
    );
    let ds_bytes = std::fs::read(dir.path().join("ds.bowd")).unwrap();
    expect_ok(
        dir.path(),
        &["train-vocab", "--input", "ds.bowd", "--k", "8", "--seed", "1", "--out", "v.bowv"],
    );
    let vocab_bytes = std::fs::read(dir.path().join("v.bowv")).unwrap();
    expect_ok(
        dir.path(),
        &["build-index", "--vocab", "v.bowv", "--input", "ds.bowd", "--out", "ix.bowi"],
    );
    expect_ok(
        dir.path(),
        &[
            "bench", "--index", "ix.bowi", "--vocab", "v.bowv", "--dataset", "ds.bowd",
            "--rules", "never", "--n", "1", "--runs", "1", "--out", "report.csv",
        ],
    );
    assert_eq!(ds_bytes, std::fs::read(dir.path().join("ds.bowd")).unwrap());
    assert_eq!(vocab_bytes, std::fs::read(dir.path().join("v.bowv")).unwrap());
}

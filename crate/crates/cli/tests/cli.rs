use std::path::Path;
use std::process::{Command, Output};

fn textdiar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textdiar"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = textdiar(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn records(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const REFERENCE: &str = r#"{"id":"c1","sentences":[{"index":0,"text":"What time is it there?","speaker":"A"},{"index":1,"text":"It's 3:40.","speaker":"B"},{"index":2,"text":"Thanks, bye.","speaker":"A"}]}
"#;

#[test]
fn align_identical_transcripts_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ref.jsonl"), REFERENCE).unwrap();
    let hyp = REFERENCE.replace(",\"speaker\":\"A\"", "").replace(",\"speaker\":\"B\"", "");
    std::fs::write(d.join("hyp.jsonl"), hyp).unwrap();
    ok(d, &["align", "--reference", "ref.jsonl", "--hypothesis", "hyp.jsonl", "--out", "out.jsonl"]);
    let out = records(&d.join("out.jsonl"));
    let speakers: Vec<&str> = out[0]["sentences"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["speaker"].as_str().unwrap())
        .collect();
    assert_eq!(speakers, ["A", "B", "A"]);
}

#[test]
fn align_missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ref.jsonl"), REFERENCE).unwrap();
    let out = textdiar(d, &["align", "--reference", "ref.jsonl", "--hypothesis", "nope.jsonl", "--out", "o.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
}

#[test]
fn align_reference_without_speakers_is_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unlabeled = REFERENCE.replace(",\"speaker\":\"A\"", "").replace(",\"speaker\":\"B\"", "");
    std::fs::write(d.join("ref.jsonl"), &unlabeled).unwrap();
    std::fs::write(d.join("hyp.jsonl"), &unlabeled).unwrap();
    let out = textdiar(d, &["align", "--reference", "ref.jsonl", "--hypothesis", "hyp.jsonl", "--out", "o.jsonl"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn malformed_transcript_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.jsonl"), format!("{REFERENCE}{{\"id\":\n")).unwrap();
    let out = textdiar(d, &["predict", "--input", "bad.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn train_separable_toy_reaches_low_loss() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("toy.jsonl"), REFERENCE).unwrap();
    let out = ok(
        d,
        &["--mode", "spm", "train", "--data", "toy.jsonl", "--out", "m.txt", "--epochs", "3000", "--learning-rate", "0.5", "--hash-bits", "8"],
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["loss"].as_f64().unwrap() < 0.01, "{report}");
}

#[test]
fn training_twice_gives_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "4", "simulate", "--out", "c.jsonl", "--conversations", "4", "--sentences", "20"]);
    for name in ["a.txt", "b.txt"] {
        ok(d, &["--seed", "4", "train", "--data", "c.jsonl", "--out", name, "--epochs", "10", "--hash-bits", "10"]);
    }
    assert_eq!(std::fs::read(d.join("a.txt")).unwrap(), std::fs::read(d.join("b.txt")).unwrap());
}

#[test]
fn multispeaker_training_warns_on_excess_speakers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "3", "--sentences", "15", "--speakers", "2"]);
    let out = ok(
        d,
        &["--mode", "multispeaker", "--window-len", "4", "train", "--data", "c.jsonl", "--out", "m.txt", "--speakers", "3", "--epochs", "5", "--hash-bits", "8"],
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configured for 3 speakers"), "{stderr}");
}

#[test]
fn oracle_predictions_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "5", "--sentences", "25"]);
    ok(d, &["predict", "--input", "c.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0"]);
    ok(d, &["evaluate", "--gold", "c.jsonl", "--predictions", "p.jsonl", "--out", "r.jsonl", "--table", "t.txt"]);
    let corpus = records(&d.join("r.jsonl")).into_iter().find(|r| r["type"] == "corpus").unwrap();
    assert_eq!(corpus["pooled_wder"], 0.0);
    assert_eq!(corpus["wder_s"], 0.0);
    assert!(std::fs::read_to_string(d.join("t.txt")).unwrap().contains("WD-S"));

    ok(d, &["analyze", "--gold", "c.jsonl", "--predictions", "p.jsonl", "--out", "a.jsonl"]);
    let eff = &records(&d.join("a.jsonl"))[0];
    assert_eq!(eff["total"], 0);
}

#[test]
fn sentence_buckets_work_without_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("g.jsonl"), REFERENCE).unwrap();
    ok(d, &["predict", "--input", "g.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0"]);
    ok(d, &["evaluate", "--gold", "g.jsonl", "--predictions", "p.jsonl", "--out", "r.jsonl", "--buckets", "sentences"]);
    let out = textdiar(d, &["evaluate", "--gold", "g.jsonl", "--predictions", "p.jsonl", "--out", "r.jsonl", "--buckets", "minutes"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn baseline_rows_join_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "3", "--sentences", "12"]);
    ok(d, &["predict", "--input", "c.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0.1"]);
    std::fs::write(
        d.join("base.jsonl"),
        "{\"system\":\"Audio baseline\",\"short_wder\":0.12,\"short_wder_s\":0.1,\"long_wder\":null,\"long_wder_s\":null,\"overall_wder\":0.12,\"overall_wder_s\":0.1}\n",
    )
    .unwrap();
    let out = ok(d, &["evaluate", "--gold", "c.jsonl", "--predictions", "p.jsonl", "--out", "r.jsonl", "--baseline", "base.jsonl", "--system", "ours"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("Audio baseline") && table.contains("ours"), "{table}");
}

#[test]
fn analysis_sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "6", "--sentences", "30"]);
    ok(d, &["--window-len", "4", "predict", "--input", "c.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0.3"]);
    for name in ["a.txt", "b.txt"] {
        ok(d, &["--seed", "9", "analyze", "--gold", "c.jsonl", "--predictions", "p.jsonl", "--out", "a.jsonl", "--slices", name, "--samples", "5"]);
    }
    let a = std::fs::read_to_string(d.join("a.txt")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.txt")).unwrap());
    assert_eq!(a.matches("Model Prediction:").count(), 5);
}

#[test]
fn analysis_needs_votes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "2", "--sentences", "10"]);
    ok(d, &["--mode", "spm", "predict", "--input", "c.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0.1"]);
    let out = textdiar(d, &["analyze", "--gold", "c.jsonl", "--predictions", "p.jsonl", "--out", "a.jsonl"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn multispeaker_oracle_runs_through_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "3", "--sentences", "20", "--speakers", "2"]);
    ok(
        d,
        &["--mode", "multispeaker", "--window-len", "5", "predict", "--input", "c.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0"],
    );
    ok(d, &["evaluate", "--gold", "c.jsonl", "--predictions", "p.jsonl", "--out", "r.jsonl"]);
    let corpus = records(&d.join("r.jsonl")).into_iter().find(|r| r["type"] == "corpus").unwrap();
    assert_eq!(corpus["pooled_wder"], 0.0);
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "1", "--sentences", "6"]);

    std::fs::write(d.join("bad.toml"), "windowlen = 3\n").unwrap();
    let out = textdiar(d, &["--config", "bad.toml", "simulate", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));

    let out = textdiar(d, &["--stride", "8", "predict", "--input", "c.jsonl", "--out", "p.jsonl", "--oracle-epsilon", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = textdiar(d, &["predict", "--input", "c.jsonl", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(2));

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    std::fs::write(d.join("remote.toml"), "[remote]\nretries = 0\n").unwrap();
    let endpoint = format!("http://127.0.0.1:{port}");
    let out = textdiar(d, &["--config", "remote.toml", "--endpoint", &endpoint, "predict", "--input", "c.jsonl", "--out", "p.jsonl"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn jobs_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--out", "c.jsonl", "--conversations", "9", "--sentences", "20"]);
    ok(d, &["--jobs", "1", "predict", "--input", "c.jsonl", "--out", "p1.jsonl", "--oracle-epsilon", "0.2"]);
    ok(d, &["--jobs", "3", "predict", "--input", "c.jsonl", "--out", "p3.jsonl", "--oracle-epsilon", "0.2"]);
    assert_eq!(std::fs::read(d.join("p1.jsonl")).unwrap(), std::fs::read(d.join("p3.jsonl")).unwrap());
}

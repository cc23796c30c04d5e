//! Runs the `idgap` binary against generated fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SPEC: &str = r#"
seed = 11
n_subreddits = 12
n_authors = 300
deleted_rate = 0.03

[comments]
lo = 50000
hi = 170000
seconds_per_id = 25.0
gaps = [
  { model = "uniform", rate = 0.01 },
  { model = "bursty", rate = 0.01, mean_len = 12.0 },
  { model = "epoch_jump", lo = 100000, hi = 104999, label = "jump" },
]

[submissions]
lo = 10
hi = 12010
seconds_per_id = 250.0
gaps = [{ model = "uniform", rate = 0.02 }]

[dangling_plants]
comments = 4
submissions = 7
"#;

const CLEAN_SPEC: &str = r#"
seed = 3
n_subreddits = 5
n_authors = 50

[comments]
lo = 1
hi = 20000
seconds_per_id = 30.0

[submissions]
lo = 1
hi = 2000
seconds_per_id = 300.0
"#;

fn idgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idgap")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = idgap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn synth(dir: &Path, spec: &str, name: &str) -> PathBuf {
    let spec_path = dir.join(format!("{name}.toml"));
    fs::write(&spec_path, spec).unwrap();
    let out = dir.join(name);
    ok(&["synth", "--spec", spec_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    out
}

fn report(path: &Path) -> Value {
    let doc: Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    doc["report"].clone()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn census_matches_generator_truth() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), SPEC, "corpus");
    let truth = report(&corpus.join("truth.json"));
    let out = dir.path().join("census");
    ok(&[
        "census",
        "--comments",
        s(&corpus.join("comments.ndjson")),
        "--submissions",
        s(&corpus.join("submissions.ndjson")),
        "--promote-discontinuities",
        "5000",
        "--out",
        s(&out),
    ]);
    for kind in ["comment", "submission"] {
        let census = report(&out.join(format!("census_{kind}.json")));
        let key = format!("{kind}s");
        assert_eq!(census["report"]["missing_total"], truth[&key]["missing_total"], "{kind}");
        assert_eq!(census["report"]["observed"], truth[&key]["observed"], "{kind}");
    }
    let candidates = report(&out.join("census_comment.json"))["candidate_discontinuities"].as_array().unwrap().len();
    assert_eq!(candidates, 0, "the jump is shorter than the reporting threshold");
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), SPEC, "a");
    let b = synth(dir.path(), SPEC, "b");
    for name in ["comments.ndjson", "submissions.ndjson", "truth.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn gap_free_corpus_reports_nothing_missing() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), CLEAN_SPEC, "clean");
    let out = dir.path().join("full");
    ok(&[
        "full",
        "--comments",
        s(&corpus.join("comments.ndjson")),
        "--submissions",
        s(&corpus.join("submissions.ndjson")),
        "--out",
        s(&out),
    ]);
    for kind in ["comment", "submission"] {
        let census = report(&out.join(format!("census_{kind}.json")));
        assert_eq!(census["report"]["missing_total"], 0);
    }
    let dangling = report(&out.join("dangling.json"));
    assert_eq!(dangling["dangling_comment_refs"], 0);
    assert_eq!(dangling["dangling_submission_refs"], 0);
    for t in report(&out.join("temporal.json")).as_array().unwrap() {
        assert!(t["monthly"].as_array().unwrap().iter().all(|m| m["missing"] == 0));
    }
    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "full");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2_and_data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(idgap(&["census", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(idgap(&["census", "--comments", "/nonexistent.ndjson", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(idgap(&["census", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(idgap(&["--workers", "0", "census", "--comments", "x", "--out", s(&out)]).status.code(), Some(2));

    let bad = dir.path().join("bad.ndjson");
    fs::write(
        &bad,
        "{\"id\":\"1\",\"author\":\"a\",\"subreddit\":\"s\",\"created_utc\":5,\"parent_id\":\"t3_1\",\"link_id\":\"t3_1\"}\nnot json\n",
    )
    .unwrap();
    assert_eq!(idgap(&["census", "--comments", s(&bad), "--strict", "--out", s(&out)]).status.code(), Some(1));
    assert!(!out.exists(), "a failed run leaves no bundle");
    // Lenient mode skips the bad line.
    ok(&["census", "--comments", s(&bad), "--out", s(&out)]);
    assert_eq!(report(&out.join("census_comment.json"))["ingest"]["records_malformed"], 1);
}

#[test]
fn failed_run_keeps_an_existing_directory_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let bad = dir.path().join("bad.ndjson");
    fs::write(&bad, "garbage\n").unwrap();
    assert_eq!(idgap(&["census", "--comments", s(&bad), "--strict", "--out", s(&out)]).status.code(), Some(1));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec![std::ffi::OsString::from("keep.txt")]);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), SPEC, "corpus");
    let cfg = dir.path().join("audit.toml");
    fs::write(&cfg, format!("comments = [{:?}]\nwindow = 5\nsample_size = 20\n", s(&corpus.join("comments.ndjson")))).unwrap();
    let out = dir.path().join("t");
    ok(&["--config", s(&cfg), "temporal", "--window", "2", "--out", s(&out)]);
    let doc: Value = serde_json::from_slice(&fs::read(out.join("temporal.json")).unwrap()).unwrap();
    assert_eq!(doc["config"]["window"], 2);
    assert_eq!(doc["config"]["sample_size"], 20);
    assert!(out.join("temporal_comment.csv").exists());
    assert!(!out.join("temporal_submission.csv").exists());
}

#[test]
fn users_report_clamps_sample_and_anonymizes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), SPEC, "corpus");
    let out = dir.path().join("u");
    let run = Command::new(env!("CARGO_BIN_EXE_idgap"))
        .args(["users", "--comments", s(&corpus.join("comments.ndjson")), "--submissions", s(&corpus.join("submissions.ndjson"))])
        .args(["--anonymize", "--out", s(&out)])
        .env("IDGAP_ANON_KEY", "k")
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let r = report(&out.join("risk_summary.json"));
    assert_eq!(r["sample"]["requested"], 7400);
    assert!(r["sample"]["drawn"].as_u64().unwrap() <= 300);
    let csv = fs::read_to_string(out.join("users.csv")).unwrap();
    assert!(!csv.contains("user_"), "author names are replaced");
    let unkeyed = idgap(&["users", "--comments", s(&corpus.join("comments.ndjson")), "--anonymize", "--out", s(&dir.path().join("v"))]);
    assert_eq!(unkeyed.status.code(), Some(2));
}

#[test]
fn census_of_one_kind_with_an_exclusion_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), SPEC, "corpus");
    let truth = report(&corpus.join("truth.json"));
    let x = dir.path().join("x.toml");
    fs::write(&x, "[[exclusion]]\nlo = 100000\nhi = 104999\nlabel = \"jump\"\n").unwrap();
    let out = dir.path().join("c");
    ok(&["census", "--kind", "comment", "--comments", s(&corpus.join("comments.ndjson")), "--exclusions", s(&x), "--out", s(&out)]);
    let census = report(&out.join("census_comment.json"));
    assert_eq!(census["report"]["missing_total"], truth["comments"]["missing_total"]);
    assert_eq!(census["report"]["excluded"], 5000);
    assert!(!out.join("census_submission.json").exists());
    let both =
        idgap(&["dangling", "--kind", "comment", "--comments", s(&corpus.join("comments.ndjson")), "--out", s(&dir.path().join("d"))]);
    assert_eq!(both.status.code(), Some(2));
}

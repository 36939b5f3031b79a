//! Binary-level behavior: exit codes, empty corpora and reruns.

mod common;

use common::{diff, run_cli, shipped_fixtures, snapshot};

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn align_before_fetch_exits_2_naming_the_pairs_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &["align"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("raw") && err.contains("pairs.jsonl"), "{err}");
}

#[test]
fn bad_flag_value_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(dir.path(), &["--from", "not-a-date", "fetch-hn", "--offline"]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(2));
}

#[test]
fn empty_corpus_still_emits_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("empty_fixtures");
    std::fs::create_dir_all(&fixtures).unwrap();
    std::fs::write(fixtures.join("index.jsonl"), "").unwrap();
    let out = run_cli(
        dir.path(),
        &["all", "--offline", "--fixtures-dir", fixtures.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let files = snapshot(&dir.path().join("out"));
    for name in [
        "manifest.csv",
        "summary_report.txt",
        "summary_inference.txt",
        "tables/dataset_stats.csv",
        "tables/event_curves.csv",
        "tables/launch_effects.csv",
        "tables/group_comparisons.csv",
        "tables/model_performance.csv",
    ] {
        assert!(files.contains_key(name), "{name} missing");
    }
}

#[test]
fn rerun_from_warm_cache_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = shipped_fixtures();
    let args = ["all", "--offline", "--fixtures-dir", fixtures.to_str().unwrap()];
    let first = run_cli(dir.path(), &args);
    assert!(first.status.success(), "{}", stderr(&first));
    let before = snapshot(&dir.path().join("out"));
    std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    let second = run_cli(dir.path(), &args);
    assert!(second.status.success(), "{}", stderr(&second));
    let changed = diff(&before, &snapshot(&dir.path().join("out")));
    assert!(changed.is_empty(), "changed after rerun: {changed:?}");
}

//! Fetch stages against canned API responses rendered from a known corpus.

use std::path::Path;
use std::sync::Arc;

use chrono::{TimeZone, Utc};

use launchpulse::http::{CountingTransport, DenyTransport, FixtureTransport, Transport};
use launchpulse::model::{read_jsonl, read_star_log, DataLayout, LaunchEvent, RepoSnapshot};
use launchpulse::pipeline::{Pipeline, RunConfig, Stage};
use launchpulse::synth::{generate_corpus, render_api_fixtures, Corpus, SynthSpec};
use launchpulse::time::SimClock;

fn corpus() -> Corpus {
    let spec = SynthSpec {
        n_repos: 24,
        seed: 31,
        restricted_repos: 1,
        duplicate_posts: 3,
        gist_posts: 2,
        non_github_posts: 2,
        no_url_posts: 1,
        ..SynthSpec::default()
    };
    generate_corpus(&spec).unwrap()
}

fn config(root: &Path, offline: bool) -> RunConfig {
    let mut c = RunConfig::with_dirs(root.join("data"), root.join("out"));
    c.cache_dir = root.join("cache");
    c.fixtures_dir = root.join("fixtures");
    c.offline = offline;
    c.rate_budget = 5000;
    c
}

fn render(root: &Path, corpus: &Corpus) {
    let c = config(root, true);
    render_api_fixtures(corpus, &c.fixtures_dir, c.range, &c.keywords).unwrap();
}

fn sim_clock() -> Arc<SimClock> {
    Arc::new(SimClock::new(Utc.with_ymd_and_hms(2026, 1, 15, 0, 0, 0).unwrap()))
}

const FETCH: [Stage; 2] = [Stage::FetchHn, Stage::FetchGh];

#[test]
fn fetched_pairs_and_logs_match_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus();
    render(dir.path(), &corpus);
    let c = config(dir.path(), true);
    Pipeline::new(c.clone()).run_stages(&FETCH).unwrap();
    let data = DataLayout::new(&c.data_dir);

    let pairs: Vec<LaunchEvent> = read_jsonl(&data.pairs()).unwrap();
    assert_eq!(pairs, corpus.events);

    let snapshots: Vec<RepoSnapshot> = read_jsonl(&data.repos()).unwrap();
    assert_eq!(snapshots.len(), corpus.snapshots.len());
    for (got, want) in snapshots.iter().zip(&corpus.snapshots) {
        assert_eq!(got.slug, want.slug);
        assert_eq!(got.created_at, want.created_at);
        assert_eq!(got.readme_length, want.readme_length, "{}", want.slug);
        assert_eq!(got.license_id, want.license_id);
        assert_eq!(got.topics, want.topics);
        assert_eq!(got.owner_is_org, want.owner_is_org);
    }

    for want in &corpus.logs {
        let got = read_star_log(&data.star_log(&want.slug)).unwrap();
        if want.complete {
            assert!(got.complete, "{}", want.slug);
            assert_eq!(got.starred_at, want.starred_at, "{}", want.slug);
        } else {
            assert!(!got.complete, "{} should be marked incomplete", want.slug);
            assert!(got.reason.is_some());
        }
    }
}

#[test]
fn warm_cache_makes_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    render(dir.path(), &corpus());
    let c = config(dir.path(), false);
    let clock = sim_clock();
    let fixtures: Arc<dyn Transport> = Arc::new(FixtureTransport::open(&c.fixtures_dir).unwrap());

    let cold = Arc::new(CountingTransport::new(fixtures.clone()));
    Pipeline::with_transport(c.clone(), cold.clone(), clock.clone())
        .run_stages(&FETCH)
        .unwrap();
    assert!(cold.calls() > 0);
    let first = std::fs::read(DataLayout::new(&c.data_dir).repos()).unwrap();

    let warm = Arc::new(CountingTransport::new(fixtures));
    Pipeline::with_transport(c.clone(), warm.clone(), clock)
        .run_stages(&FETCH)
        .unwrap();
    assert_eq!(warm.calls(), 0);
    assert_eq!(std::fs::read(DataLayout::new(&c.data_dir).repos()).unwrap(), first);
}

#[test]
fn offline_never_touches_the_network() {
    let dir = tempfile::tempdir().unwrap();
    render(dir.path(), &corpus());
    let network = Arc::new(CountingTransport::new(Arc::new(DenyTransport)));
    Pipeline::with_transport(config(dir.path(), true), network.clone(), sim_clock())
        .run_all()
        .unwrap();
    assert_eq!(network.calls(), 0);
}

#[test]
fn offline_without_fixtures_is_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let err = Pipeline::new(config(dir.path(), true))
        .run_stage(Stage::FetchHn)
        .unwrap_err();
    assert!(err.to_string().contains("index.jsonl"), "{err}");
}

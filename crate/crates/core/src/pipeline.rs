//! Stage orchestration: configuration resolution, the ten subcommands and
//! their file contracts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use serde::Deserialize;

use crate::align::{align_log, AlignOutcome, AlignedSeries, Horizon};
use crate::error::{Error, Result};
use crate::eventstudy::{event_curve, group_comparison, launch_effect_summary, Grouping, Statistic};
use crate::features::{
    assemble_design_matrix, build_feature_row, design_columns, matrix_table, parse_rows_table, rows_table, FeatureRow,
    FeatureSet, RowOutcome,
};
use crate::github::{GitHubApi, RepoFetch, DEFAULT_MAX_PAGES, TOKEN_ENV};
use crate::hn::{dedupe_earliest, github_pairs, DateRange, HnSearch, DEFAULT_KEYWORDS};
use crate::http::{ApiClient, FixtureTransport, RateBudget, RateLimiter, Transport, UreqTransport, FIXTURE_INDEX};
use crate::inference::contrast::{regression_table, run_contrast, Contrast};
use crate::learn::split::MIN_SPLIT_ROWS;
use crate::learn::{fit_and_report, performance_table, LearnConfig, ModelKind, ModelReport};
use crate::model::{
    read_jsonl, read_star_log, write_jsonl, write_star_log, DataLayout, HnPost, LaunchEvent, RepoSnapshot,
};
use crate::report::summary::{render_inference, render_report, SummaryInputs};
use crate::report::svg::write_svg;
use crate::report::table::Table;
use crate::report::{
    check_complete, dataset_stats_table, event_curve_figure, event_curves_table, group_comparisons_table, hour_figure,
    launch_effects_table, regression_stem, write_manifest, DatasetStats, OutLayout, DATASET_STATS, EVENT_CURVES,
    EVENT_CURVE_FIGURE, GROUP_COMPARISONS, HOUR_FIGURE, LAUNCH_EFFECTS, MODEL_PERFORMANCE,
};
use crate::store::{CacheStore, CACHE_DIR_ENV, DEFAULT_CACHE_DIR};
use crate::synth::{generate_corpus, verify_against_manifest, write_corpus, GroundTruth, SynthSpec};
use crate::time::{format_ts, parse_instant_or_date, Clock, SystemClock};

pub const DEFAULT_FROM: &str = "2024-01-01";
pub const DEFAULT_TO: &str = "2025-12-31";
pub const DEFAULT_DATA_DIR: &str = "data";
pub const DEFAULT_OUT_DIR: &str = "out";
pub const DEFAULT_SEED: u64 = 42;
/// GitHub requests per hour with and without a token.
pub const AUTH_BUDGET: u32 = 5000;
pub const ANON_BUDGET: u32 = 60;
/// Algolia's documented per-IP allowance.
pub const HN_BUDGET: u32 = 10_000;
pub const FETCH_WORKERS: usize = 4;

/// Fixture corpus shipped with the crate.
pub fn shipped_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    FetchHn,
    FetchGh,
    Align,
    Features,
    Study,
    Infer,
    Model,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::FetchHn,
        Stage::FetchGh,
        Stage::Align,
        Stage::Features,
        Stage::Study,
        Stage::Infer,
        Stage::Model,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::FetchHn => "fetch-hn",
            Stage::FetchGh => "fetch-gh",
            Stage::Align => "align",
            Stage::Features => "features",
            Stage::Study => "study",
            Stage::Infer => "infer",
            Stage::Model => "model",
            Stage::Report => "report",
        }
    }
}

/// Config-file document. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub from: Option<String>,
    pub to: Option<String>,
    pub keywords: Option<Vec<String>>,
    pub data_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub fixtures_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub offline: Option<bool>,
    pub max_pages: Option<u32>,
    pub rate_budget: Option<u32>,
    pub feature_sets: Option<Vec<String>>,
    pub model: Option<ModelOverrides>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

/// Hyperparameter overrides from the `[model]` table.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub train_ratio: Option<f64>,
    pub n_trees: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub folds: Option<usize>,
    pub n_lambdas: Option<usize>,
    pub lambda_min_ratio: Option<f64>,
    pub l1_ratios: Option<Vec<f64>>,
    pub importance_repeats: Option<usize>,
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverrides {
    pub from: Option<String>,
    pub to: Option<String>,
    pub keywords: Option<Vec<String>>,
    pub data_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub fixtures_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub offline: bool,
    pub max_pages: Option<u32>,
    pub rate_budget: Option<u32>,
    pub feature_sets: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub range: DateRange,
    pub keywords: Vec<String>,
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub fixtures_dir: PathBuf,
    pub seed: u64,
    pub offline: bool,
    pub max_pages: u32,
    /// GitHub requests per hour.
    pub rate_budget: u32,
    pub github_token: Option<String>,
    pub feature_sets: Vec<FeatureSet>,
    pub learn: LearnConfig,
    /// Alternative launch list for `fetch-gh`; defaults to the data tree's.
    pub pairs: Option<PathBuf>,
}

/// `--to` given as a bare date includes that whole day.
fn range_end(text: &str) -> Result<DateTime<Utc>> {
    let ts = parse_instant_or_date(text)?;
    let bare_date = text.len() == 10 && !text.contains('T');
    Ok(if bare_date { ts + Duration::days(1) } else { ts })
}

fn split_keywords(list: &[String]) -> Vec<String> {
    list.iter()
        .flat_map(|k| k.split(','))
        .map(|k| k.trim().to_string())
        .filter(|k| !k.is_empty())
        .collect()
}

impl RunConfig {
    /// Resolves each setting from flags, then the environment, then the
    /// config file, then built-in defaults.
    pub fn resolve(flags: &FlagOverrides, env: &dyn Fn(&str) -> Option<String>, file: &FileConfig) -> Result<Self> {
        let from = flags.from.clone().or(file.from.clone()).unwrap_or(DEFAULT_FROM.into());
        let to = flags.to.clone().or(file.to.clone()).unwrap_or(DEFAULT_TO.into());
        let range = DateRange::new(parse_instant_or_date(&from)?, range_end(&to)?)?;
        let keywords = match flags.keywords.as_ref().or(file.keywords.as_ref()) {
            Some(k) => split_keywords(k),
            None => DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect(),
        };
        if keywords.is_empty() {
            return Err(Error::invalid("at least one keyword is required"));
        }
        let data_dir = flags
            .data_dir
            .clone()
            .or(file.data_dir.clone())
            .unwrap_or(DEFAULT_DATA_DIR.into());
        let cache_dir = flags
            .cache_dir
            .clone()
            .or(env(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or(file.cache_dir.clone())
            .unwrap_or(DEFAULT_CACHE_DIR.into());
        let github_token = env(TOKEN_ENV).filter(|t| !t.trim().is_empty());
        let rate_budget = flags
            .rate_budget
            .or(file.rate_budget)
            .unwrap_or(if github_token.is_some() {
                AUTH_BUDGET
            } else {
                ANON_BUDGET
            });
        if rate_budget == 0 {
            return Err(Error::invalid("rate budget must be positive"));
        }
        let feature_sets = match flags.feature_sets.as_ref().or(file.feature_sets.as_ref()) {
            Some(list) => split_keywords(list)
                .iter()
                .map(|s| FeatureSet::parse(s))
                .collect::<Result<Vec<_>>>()?,
            None => FeatureSet::ALL.to_vec(),
        };
        let seed = flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let mut learn = LearnConfig::default().with_seed(seed);
        if let Some(m) = &file.model {
            apply_model_overrides(&mut learn, m)?;
        }
        Ok(Self {
            range,
            keywords,
            data_dir,
            cache_dir,
            out_dir: flags
                .out_dir
                .clone()
                .or(file.out_dir.clone())
                .unwrap_or(DEFAULT_OUT_DIR.into()),
            fixtures_dir: flags
                .fixtures_dir
                .clone()
                .or(file.fixtures_dir.clone())
                .unwrap_or_else(shipped_fixtures),
            seed,
            offline: flags.offline || file.offline.unwrap_or(false),
            max_pages: flags.max_pages.or(file.max_pages).unwrap_or(DEFAULT_MAX_PAGES),
            rate_budget,
            github_token,
            feature_sets,
            learn,
            pairs: None,
        })
    }

    /// Defaults with the given data and output roots; used by tests and tools.
    pub fn with_dirs(data_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        let flags = FlagOverrides {
            cache_dir: Some(data_dir.join("cache")),
            data_dir: Some(data_dir),
            out_dir: Some(out_dir.into()),
            ..FlagOverrides::default()
        };
        Self::resolve(&flags, &|_| None, &FileConfig::default()).expect("defaults are valid")
    }

    pub fn data(&self) -> DataLayout {
        DataLayout::new(&self.data_dir)
    }

    pub fn out(&self) -> OutLayout {
        OutLayout::new(&self.out_dir)
    }
}

fn apply_model_overrides(learn: &mut LearnConfig, m: &ModelOverrides) -> Result<()> {
    if let Some(v) = m.train_ratio {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::invalid("model.train_ratio must be in (0, 1)"));
        }
        learn.train_ratio = v;
    }
    if let Some(v) = m.n_trees {
        learn.gbt.n_trees = v;
    }
    if let Some(v) = m.learning_rate {
        learn.gbt.learning_rate = v;
    }
    if let Some(v) = m.max_depth {
        learn.gbt.max_depth = v;
    }
    if let Some(v) = m.min_leaf {
        learn.gbt.min_leaf = v;
    }
    if let Some(v) = m.folds {
        learn.cv.folds = v;
    }
    if let Some(v) = m.n_lambdas {
        learn.cv.n_lambdas = v;
    }
    if let Some(v) = m.lambda_min_ratio {
        learn.cv.lambda_min_ratio = v;
    }
    if let Some(v) = &m.l1_ratios {
        if v.is_empty() || v.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::invalid("model.l1_ratios must be non-empty values in (0, 1]"));
        }
        learn.cv.l1_grid = v.clone();
    }
    if let Some(v) = m.importance_repeats {
        learn.importance_repeats = v;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub warnings: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        Self {
            stage,
            warnings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn warn(&mut self, message: String) {
        log::warn!("{}: {message}", self.stage.name());
        self.warnings.push(message);
    }
}

/// 0 ok, 1 hard error, 2 missing input.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(Error::MissingInput(_)) => 2,
        Err(_) => 1,
    }
}

/// Per-repository fetch result: the snapshot, if any, and its warnings.
type FetchOutcome = (Option<RepoSnapshot>, Vec<String>);

pub struct Pipeline {
    config: RunConfig,
    network: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        Self::with_transport(config, Arc::new(UreqTransport::default()), Arc::new(SystemClock))
    }

    /// `network` is used only when the config is not offline.
    pub fn with_transport(config: RunConfig, network: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        Self { config, network, clock }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Offline runs read the fixture directory and keep a separate cache so
    /// canned responses never mix with live ones.
    fn client(&self, budget: u32) -> Result<ApiClient> {
        let c = &self.config;
        let (transport, limiter, cache_dir): (Arc<dyn Transport>, _, _) = if c.offline {
            let index = c.fixtures_dir.join(FIXTURE_INDEX);
            if !index.is_file() {
                return Err(Error::MissingInput(index));
            }
            (
                Arc::new(FixtureTransport::open(&c.fixtures_dir)?),
                None,
                c.cache_dir.join("offline"),
            )
        } else {
            let limiter = RateLimiter::new(RateBudget::per_hour(budget), self.clock.clone());
            (self.network.clone(), Some(Arc::new(limiter)), c.cache_dir.clone())
        };
        let store = Arc::new(CacheStore::with_clock(cache_dir, self.clock.clone())?);
        let mut client = ApiClient::new(transport, store, limiter, self.clock.clone(), c.seed)
            .with_default_header("User-Agent", concat!("launchpulse/", env!("CARGO_PKG_VERSION")));
        if let Some(token) = &c.github_token {
            if !c.offline {
                client = client.with_default_header("Authorization", &format!("Bearer {token}"));
            }
        }
        Ok(client)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageReport> {
        log::info!("stage {} starting", stage.name());
        let mut report = StageReport::new(stage);
        match stage {
            Stage::FetchHn => self.fetch_hn(&mut report)?,
            Stage::FetchGh => self.fetch_gh(&mut report)?,
            Stage::Align => self.align(&mut report)?,
            Stage::Features => self.features(&mut report)?,
            Stage::Study => self.study(&mut report)?,
            Stage::Infer => self.infer(&mut report)?,
            Stage::Model => self.model(&mut report)?,
            Stage::Report => self.report(&mut report)?,
        }
        log::info!(
            "stage {} done: {} outputs, {} warnings",
            stage.name(),
            report.outputs.len(),
            report.warnings.len()
        );
        Ok(report)
    }

    /// Runs `stages` in order and stops at the first hard error; outputs of
    /// earlier stages stay on disk.
    pub fn run_stages(&self, stages: &[Stage]) -> Result<Vec<StageReport>> {
        stages.iter().map(|&s| self.run_stage(s)).collect()
    }

    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        self.run_stages(&Stage::ALL)
    }

    /// Generates a synthetic corpus into the data directory, runs every
    /// offline stage on it and checks the outputs against the ground truth.
    pub fn run_synth(&self, spec: &SynthSpec) -> Result<Vec<StageReport>> {
        let corpus = generate_corpus(spec)?;
        write_corpus(&corpus, &self.config.data())?;
        let reports = self.run_stages(&Stage::ALL[2..])?;
        let truth = GroundTruth::load(&self.config.data().synth_manifest())?;
        let verdict = verify_against_manifest(&self.config.data(), &self.config.out(), &truth)?;
        if !verdict.passed() {
            return Err(Error::Verification(format!(
                "{} of {} checks failed:\n  {}",
                verdict.failures.len(),
                verdict.checks,
                verdict.failures.join("\n  ")
            )));
        }
        log::info!("synthetic corpus verified: {} checks passed", verdict.checks);
        Ok(reports)
    }

    fn fetch_hn(&self, report: &mut StageReport) -> Result<()> {
        let c = &self.config;
        let client = self.client(HN_BUDGET)?;
        let posts = HnSearch::new(&client).search_posts(&c.keywords, c.range, c.max_pages, &mut report.warnings)?;
        let events = dedupe_earliest(&github_pairs(&posts));
        log::info!("{} posts, {} repository launches", posts.len(), events.len());
        let data = c.data();
        write_jsonl(&data.hn_posts(), &posts)?;
        write_jsonl(&data.pairs(), &events)?;
        report.outputs.extend([data.hn_posts(), data.pairs()]);
        Ok(())
    }

    fn fetch_gh(&self, report: &mut StageReport) -> Result<()> {
        let c = &self.config;
        let data = c.data();
        let events: Vec<LaunchEvent> = read_jsonl(c.pairs.as_deref().unwrap_or(&data.pairs()))?;
        let client = self.client(c.rate_budget)?;
        let api = GitHubApi::new(&client);
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<FetchOutcome>>> = Mutex::new(vec![None; events.len()]);
        let work = || -> Result<()> {
            loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(event) = events.get(i) else {
                    return Ok(());
                };
                let mut warnings = Vec::new();
                let snapshot = match api.fetch_repo_metadata(&event.slug) {
                    Ok(RepoFetch::Found(s)) => {
                        let log = api.fetch_star_events(&event.slug, c.max_pages, Some(s.stars_total), &mut warnings);
                        write_star_log(&data.star_log(&event.slug), &log)?;
                        Some(s)
                    }
                    Ok(RepoFetch::Missing) => {
                        warnings.push(format!("{}: repository not found; skipped", event.slug));
                        None
                    }
                    Err(e) => {
                        warnings.push(format!("{}: metadata unavailable ({e}); skipped", event.slug));
                        None
                    }
                };
                results.lock().unwrap()[i] = Some((snapshot, warnings));
            }
        };
        let outcomes: Vec<Result<()>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..FETCH_WORKERS).map(|_| s.spawn(work)).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fetch worker panicked"))
                .collect()
        });
        outcomes.into_iter().collect::<Result<Vec<()>>>()?;
        let mut snapshots = Vec::new();
        for (snapshot, warnings) in results.into_inner().unwrap().into_iter().flatten() {
            for w in warnings {
                report.warn(w);
            }
            snapshots.extend(snapshot);
        }
        write_jsonl(&data.repos(), &snapshots)?;
        report.outputs.extend([data.repos(), data.stars_dir()]);
        Ok(())
    }

    fn align(&self, report: &mut StageReport) -> Result<()> {
        let data = self.config.data();
        let events: Vec<LaunchEvent> = read_jsonl(&data.pairs())?;
        if !data.stars_dir().is_dir() && !events.is_empty() {
            return Err(Error::MissingInput(data.stars_dir()));
        }
        let mut series: Vec<AlignedSeries> = Vec::new();
        let mut exclusions = Table::new(&["slug", "reason"]);
        for event in &events {
            let path = data.star_log(&event.slug);
            let outcome = if path.is_file() {
                align_log(&read_star_log(&path)?, event.t0())?
            } else {
                AlignOutcome::Excluded {
                    slug: event.slug.clone(),
                    reason: "no star history (repository metadata unavailable)".into(),
                }
            };
            match outcome {
                AlignOutcome::Series(s) => series.push(s),
                AlignOutcome::Excluded { slug, reason } => {
                    report.warn(format!("{slug} excluded: {reason}"));
                    exclusions.push(vec![slug.to_string(), reason]);
                }
            }
        }
        write_jsonl(&data.series(), &series)?;
        exclusions.write(&data.exclusions())?;
        report.outputs.extend([data.series(), data.exclusions()]);
        Ok(())
    }

    fn features(&self, report: &mut StageReport) -> Result<()> {
        let data = self.config.data();
        let events: Vec<LaunchEvent> = read_jsonl(&data.pairs())?;
        let snapshots: Vec<RepoSnapshot> = read_jsonl(&data.repos())?;
        let series: Vec<AlignedSeries> = read_jsonl(&data.series())?;
        let events: BTreeMap<_, _> = events.iter().map(|e| (&e.slug, e)).collect();
        let snapshots: BTreeMap<_, _> = snapshots.iter().map(|s| (&s.slug, s)).collect();
        let mut rows: Vec<FeatureRow> = Vec::new();
        let mut rejections = Table::new(&["slug", "reason"]);
        for s in &series {
            s.validate()?;
            let (Some(event), Some(snapshot)) = (events.get(&s.slug), snapshots.get(&s.slug)) else {
                let reason = "no launch event or repository metadata".to_string();
                report.warn(format!("{} rejected: {reason}", s.slug));
                rejections.push(vec![s.slug.to_string(), reason]);
                continue;
            };
            match build_feature_row(event, snapshot, s)? {
                RowOutcome::Row(r) => rows.push(r),
                RowOutcome::Rejected { slug, reason } => {
                    report.warn(format!("{slug} rejected: {reason}"));
                    rejections.push(vec![slug.to_string(), reason]);
                }
            }
        }
        rows_table(&rows).write(&data.feature_rows())?;
        rejections.write(&data.rejections())?;
        report.outputs.extend([data.feature_rows(), data.rejections()]);
        for fs in FeatureSet::ALL {
            for h in Horizon::ALL {
                let table = if rows.is_empty() {
                    let mut header: Vec<String> = vec![crate::features::INTERCEPT.into()];
                    header.extend(design_columns(fs, h).iter().map(|c| c.to_string()));
                    header.push(format!("target:{}", h.key()));
                    Table::new(&header)
                } else {
                    matrix_table(&assemble_design_matrix(&rows, fs, h)?, h)
                };
                let path = data.matrix(fs.key(), h.key());
                table.write(&path)?;
                report.outputs.push(path);
            }
        }
        Ok(())
    }

    fn read_rows(&self) -> Result<Vec<FeatureRow>> {
        parse_rows_table(&Table::read(&self.config.data().feature_rows())?)
    }

    fn study(&self, report: &mut StageReport) -> Result<()> {
        let data = self.config.data();
        let out = self.config.out();
        let series: Vec<AlignedSeries> = read_jsonl(&data.series())?;
        let rows = self.read_rows()?;
        let curves = if series.is_empty() {
            None
        } else {
            Some((
                event_curve(&series, Statistic::Mean)?,
                event_curve(&series, Statistic::Median)?,
            ))
        };
        let effects = if rows.is_empty() {
            report.warn("no feature rows; launch effects are empty".into());
            Vec::new()
        } else {
            launch_effect_summary(&rows)?
        };
        let comparisons: Vec<_> = if rows.is_empty() {
            Vec::new()
        } else {
            Grouping::ALL
                .iter()
                .flat_map(|&g| Horizon::ALL.map(|h| group_comparison(&rows, g, h)))
                .collect()
        };
        for (stem, table) in [
            (EVENT_CURVES, event_curves_table(curves.as_ref().map(|(a, b)| (a, b)))),
            (LAUNCH_EFFECTS, launch_effects_table(&effects)),
            (GROUP_COMPARISONS, group_comparisons_table(&comparisons)),
        ] {
            table.write(&out.table(stem))?;
            report.outputs.push(out.table(stem));
        }
        let curve_path = out.figure(EVENT_CURVE_FIGURE);
        match &curves {
            Some((mean, median)) => {
                write_svg(&event_curve_figure(mean, median), &curve_path)?;
                report.outputs.push(curve_path);
            }
            None => remove_stale(&curve_path)?,
        }
        let hour_path = out.figure(HOUR_FIGURE);
        match comparisons
            .iter()
            .find(|c| c.grouping == Grouping::HourBin && c.target == Horizon::H48)
        {
            Some(c) => {
                write_svg(&hour_figure(c)?, &hour_path)?;
                report.outputs.push(hour_path);
            }
            None => remove_stale(&hour_path)?,
        }
        Ok(())
    }

    fn infer(&self, report: &mut StageReport) -> Result<()> {
        let out = self.config.out();
        let rows = self.read_rows()?;
        let mut regressions = Vec::new();
        for contrast in Contrast::ALL {
            for h in Horizon::ALL {
                let fit = run_contrast(&rows, contrast, h);
                if let Some(reason) = &fit.failure {
                    report.warn(format!(
                        "{} regression at {} not estimated: {reason}",
                        contrast.key(),
                        h.key()
                    ));
                }
                let stem = regression_stem(contrast.key(), h);
                let table = regression_table(&fit);
                table.write(&out.table(&stem))?;
                report.outputs.push(out.table(&stem));
                regressions.push((stem, table));
            }
        }
        crate::store::write_atomic(&out.summary_inference(), render_inference(&regressions).as_bytes())?;
        report.outputs.push(out.summary_inference());
        Ok(())
    }

    fn model(&self, report: &mut StageReport) -> Result<()> {
        let out = self.config.out();
        let rows = self.read_rows()?;
        clear_model_reports(&out.models_dir())?;
        let mut jobs = Vec::new();
        if rows.len() < MIN_SPLIT_ROWS {
            report.warn(format!(
                "{} feature rows; at least {MIN_SPLIT_ROWS} are needed to fit models",
                rows.len()
            ));
        } else {
            for &fs in &self.config.feature_sets {
                for h in Horizon::ALL {
                    let design = assemble_design_matrix(&rows, fs, h)?;
                    for kind in ModelKind::ALL {
                        jobs.push((kind, fs, h, design.clone()));
                    }
                }
            }
        }
        let learn = &self.config.learn;
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<ModelReport>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
        let workers = std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(jobs.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((kind, fs, h, design)) = jobs.get(i) else {
                        return;
                    };
                    let r = fit_and_report(*kind, design, *fs, *h, learn);
                    results.lock().unwrap()[i] = Some(r);
                });
            }
        });
        let mut reports = Vec::new();
        for (job, result) in jobs.iter().zip(results.into_inner().unwrap()) {
            match result.expect("every job ran") {
                Ok(r) => {
                    let path = out.models_dir().join(r.file_name());
                    r.to_table().write(&path)?;
                    report.outputs.push(path);
                    reports.push(r);
                }
                Err(e) => report.warn(format!(
                    "{} for {} ({}) not fitted: {e}",
                    job.0.label(),
                    job.2.key(),
                    job.1.key()
                )),
            }
        }
        performance_table(&reports).write(&out.table(MODEL_PERFORMANCE))?;
        report.outputs.push(out.table(MODEL_PERFORMANCE));
        Ok(())
    }

    fn report(&self, report: &mut StageReport) -> Result<()> {
        let data = self.config.data();
        let out = self.config.out();
        let posts: Vec<HnPost> = read_jsonl(&data.hn_posts())?;
        let events: Vec<LaunchEvent> = read_jsonl(&data.pairs())?;
        let snapshots: Vec<RepoSnapshot> = read_jsonl(&data.repos())?;
        let series: Vec<AlignedSeries> = read_jsonl(&data.series())?;
        let rows = self.read_rows()?;
        let pairs_of =
            |t: Table| -> Vec<(String, String)> { t.rows.into_iter().map(|r| (r[0].clone(), r[1].clone())).collect() };
        let stats = DatasetStats {
            hn_posts: posts.len(),
            github_posts: github_pairs(&posts).len(),
            total_pairs: events.len(),
            with_metadata: snapshots.len(),
            valid_series: series.len(),
            feature_rows: rows.len(),
            show_hn_rows: rows.iter().filter(|r| r.is_show_hn).count(),
            excluded: pairs_of(Table::read(&data.exclusions())?),
            rejected: pairs_of(Table::read(&data.rejections())?),
            first_post: events.iter().map(|e| e.t0()).min().map(|t| format_ts(&t)),
            last_post: events.iter().map(|e| e.t0()).max().map(|t| format_ts(&t)),
        };
        dataset_stats_table(&stats).write(&out.table(DATASET_STATS))?;
        report.outputs.push(out.table(DATASET_STATS));

        let dataset_stats = Table::read(&out.table(DATASET_STATS))?;
        let launch_effects = Table::read(&out.table(LAUNCH_EFFECTS))?;
        let group_comparisons = Table::read(&out.table(GROUP_COMPARISONS))?;
        let model_performance = Table::read(&out.table(MODEL_PERFORMANCE))?;
        let mut regressions = Vec::new();
        for contrast in Contrast::ALL {
            for h in Horizon::ALL {
                let stem = regression_stem(contrast.key(), h);
                let t = Table::read(&out.table(&stem))?;
                regressions.push((stem, t));
            }
        }
        let text = render_report(&SummaryInputs {
            dataset_stats: &dataset_stats,
            exclusions: &stats.excluded,
            rejections: &stats.rejected,
            launch_effects: &launch_effects,
            group_comparisons: &group_comparisons,
            regressions: &regressions,
            model_performance: &model_performance,
        });
        crate::store::write_atomic(&out.summary_report(), text.as_bytes())?;
        report.outputs.push(out.summary_report());

        let mut expected: Vec<PathBuf> = [
            EVENT_CURVES,
            LAUNCH_EFFECTS,
            GROUP_COMPARISONS,
            MODEL_PERFORMANCE,
            DATASET_STATS,
        ]
        .iter()
        .map(|s| out.table(s))
        .collect();
        expected.extend(regressions.iter().map(|(stem, _)| out.table(stem)));
        expected.extend([out.summary_inference(), out.summary_report()]);
        if !series.is_empty() {
            expected.push(out.figure(EVENT_CURVE_FIGURE));
        }
        if !rows.is_empty() {
            expected.push(out.figure(HOUR_FIGURE));
        }
        for r in &model_performance.rows {
            let cell = |name: &str| model_performance.get(r, name).unwrap_or_default().to_string();
            let fs = FeatureSet::parse(&cell("feature_set"))?;
            let h = Horizon::parse(&cell("target"))?;
            let kind = ModelKind::ALL
                .into_iter()
                .find(|k| k.label() == cell("model") || k.key() == cell("model"))
                .ok_or_else(|| Error::parse("model performance", format!("unknown model {:?}", cell("model"))))?;
            expected.push(
                out.models_dir()
                    .join(format!("report_{}_{}_{}.csv", kind.key(), h.key(), fs.key())),
            );
        }
        let manifest = write_manifest(&out)?;
        report.outputs.push(out.manifest());
        check_complete(&out, &manifest, &expected)
    }
}

fn remove_stale(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn clear_model_reports(dir: &Path) -> Result<()> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("report_") && name.ends_with(".csv") {
            remove_stale(&path)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(pairs: &'static [(&'static str, &'static str)]) -> impl Fn(&str) -> Option<String> {
        move |k| pairs.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&FlagOverrides::default(), &|_| None, &FileConfig::default()).unwrap();
        assert_eq!(format_ts(&c.range.start), "2024-01-01T00:00:00Z");
        assert_eq!(format_ts(&c.range.end), "2026-01-01T00:00:00Z");
        assert_eq!(c.keywords, vec!["LLM", "transformers", "RAG", "agents"]);
        assert_eq!(c.cache_dir, PathBuf::from("data/cache"));
        assert_eq!(c.rate_budget, ANON_BUDGET);
        assert_eq!(c.max_pages, 400);
        assert!(!c.offline);
        assert_eq!(c.feature_sets, FeatureSet::ALL.to_vec());
    }

    #[test]
    fn precedence_flag_env_file_default() {
        let file: FileConfig = toml::from_str(
            "cache_dir = \"file-cache\"\nseed = 5\nkeywords = [\"rust\"]\nrate_budget = 100\n[model]\nn_trees = 10\n",
        )
        .unwrap();
        let env = env_of(&[("LAUNCHPULSE_CACHE_DIR", "env-cache"), ("GITHUB_TOKEN", "t")]);
        let c = RunConfig::resolve(&FlagOverrides::default(), &env, &file).unwrap();
        assert_eq!(c.cache_dir, PathBuf::from("env-cache"));
        assert_eq!((c.seed, c.rate_budget, c.learn.gbt.n_trees), (5, 100, 10));
        assert_eq!(c.keywords, vec!["rust"]);
        assert_eq!(c.github_token.as_deref(), Some("t"));

        let flags = FlagOverrides {
            cache_dir: Some("flag-cache".into()),
            seed: Some(9),
            keywords: Some(vec!["a,b".into()]),
            ..FlagOverrides::default()
        };
        let c = RunConfig::resolve(&flags, &env, &file).unwrap();
        assert_eq!(c.cache_dir, PathBuf::from("flag-cache"));
        assert_eq!(c.seed, 9);
        assert_eq!(c.learn.gbt.seed, 9);
        assert_eq!(c.keywords, vec!["a", "b"]);

        let c = RunConfig::resolve(&FlagOverrides::default(), &|_| None, &file).unwrap();
        assert_eq!(c.cache_dir, PathBuf::from("file-cache"));
    }

    #[test]
    fn token_raises_default_budget() {
        let env = env_of(&[("GITHUB_TOKEN", "x")]);
        let c = RunConfig::resolve(&FlagOverrides::default(), &env, &FileConfig::default()).unwrap();
        assert_eq!(c.rate_budget, AUTH_BUDGET);
    }

    #[test]
    fn to_instant_is_exclusive_and_bad_ranges_fail() {
        let flags = FlagOverrides {
            from: Some("2024-05-01".into()),
            to: Some("2024-05-02T12:00:00Z".into()),
            ..FlagOverrides::default()
        };
        let c = RunConfig::resolve(&flags, &|_| None, &FileConfig::default()).unwrap();
        assert_eq!(format_ts(&c.range.end), "2024-05-02T12:00:00Z");
        let flags = FlagOverrides {
            from: Some("2025-01-01".into()),
            to: Some("2024-01-01".into()),
            ..FlagOverrides::default()
        };
        assert!(RunConfig::resolve(&flags, &|_| None, &FileConfig::default()).is_err());
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(())), 0);
        assert_eq!(exit_code(&Err(Error::MissingInput("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::invalid("x"))), 1);
    }

    #[test]
    fn align_without_pairs_names_the_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(RunConfig::with_dirs(dir.path().join("data"), dir.path().join("out")));
        match p.run_stage(Stage::Align) {
            Err(Error::MissingInput(path)) => assert!(path.ends_with("data/raw/pairs.jsonl"), "{path:?}"),
            other => panic!("expected missing input, got {other:?}"),
        }
    }
}

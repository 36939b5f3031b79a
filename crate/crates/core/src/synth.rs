//! Seeded synthetic launch corpora with recorded ground truth.
//!
//! A corpus is written in the same on-disk formats the fetch stages produce,
//! and can also be rendered as canned API responses for the offline
//! transport. The ground-truth file records every planted quantity.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::align::{AlignedSeries, Horizon, PRE_HOURS, WINDOW_DAYS, WINDOW_HOURS};
use crate::error::{Error, Result};
use crate::features::{parse_rows_table, FeatureRow};
use crate::github::{readme_request, repo_request, stargazers_request, GITHUB_API, STAR_PAGE_SIZE};
use crate::hn::{search_request, DateRange, ALGOLIA_BASE, DEFAULT_KEYWORDS, HITS_PER_PAGE};
use crate::http::{FixtureRoute, FIXTURE_INDEX};
use crate::model::{
    read_jsonl, write_jsonl, write_star_log, DataLayout, HnPost, LaunchEvent, RepoSlug, RepoSnapshot, StarEventLog,
};
use crate::report::table::{fmt_stars, Table};
use crate::report::{
    OutLayout, DATASET_STATS, EVENT_CURVES, GROUP_COMPARISONS, STAT_SHOW_HN, STAT_TOTAL_PAIRS, STAT_VALID_SERIES,
};
use crate::store::write_atomic;
use crate::time::{format_ts, parse_instant_or_date};

/// Generator settings. Every key is optional in the TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_repos: usize,
    pub seed: u64,
    /// Earliest launch instant (RFC 3339 or a bare date).
    pub start: String,
    /// Launches are spread uniformly over this many days after `start`.
    pub span_days: u32,
    pub keywords: Vec<String>,
    /// Background stars per hour, before and after launch.
    pub pre_rate: f64,
    /// Mean launch-day burst before feature effects.
    pub base_d24: f64,
    /// Stars per standardized unit of planted effect.
    pub effect_scale: f64,
    pub effect_hn_score: f64,
    pub effect_baseline: f64,
    pub effect_hour: f64,
    pub noise_sd: f64,
    /// Second-day burst as a fraction of the first-day burst.
    pub day2_ratio: f64,
    /// Days 3 to 7, as a fraction of the first-day burst.
    pub tail_ratio: f64,
    /// Geometric day-over-day decay of the tail.
    pub decay: f64,
    /// Hour-over-hour decay inside the first two days.
    pub hourly_decay: f64,
    /// The first this-many repositories get their burst multiplied.
    pub heavy_tail_repos: usize,
    pub heavy_tail_factor: f64,
    pub show_hn_fraction: f64,
    /// Upper bound on stars accrued before the event window opens.
    pub max_old_stars: u64,
    /// Repositories whose stargazer listing is refused.
    pub restricted_repos: usize,
    pub duplicate_posts: usize,
    pub gist_posts: usize,
    pub non_github_posts: usize,
    pub no_url_posts: usize,
    /// Whether verification checks the recovered importance ranking.
    pub check_importance: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_repos: 138,
            seed: 7,
            start: "2024-03-01".into(),
            span_days: 540,
            keywords: DEFAULT_KEYWORDS.iter().map(|k| k.to_string()).collect(),
            pre_rate: 0.05,
            base_d24: 90.0,
            effect_scale: 30.0,
            effect_hn_score: 3.0,
            effect_baseline: 2.0,
            effect_hour: 1.0,
            noise_sd: 10.0,
            day2_ratio: 0.6,
            tail_ratio: 0.8,
            decay: 0.7,
            hourly_decay: 0.93,
            heavy_tail_repos: 0,
            heavy_tail_factor: 10.0,
            show_hn_fraction: 0.4,
            max_old_stars: 300,
            restricted_repos: 0,
            duplicate_posts: 0,
            gist_posts: 0,
            non_github_posts: 0,
            no_url_posts: 0,
            check_importance: true,
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::parse("synth spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("synth spec: {m}")));
        if self.n_repos == 0 {
            return bad("n_repos must be positive".into());
        }
        if self.keywords.is_empty() {
            return bad("at least one keyword is required".into());
        }
        if self.restricted_repos > self.n_repos || self.duplicate_posts > self.n_repos {
            return bad("restricted_repos and duplicate_posts cannot exceed n_repos".into());
        }
        if self.heavy_tail_repos > self.n_repos {
            return bad("heavy_tail_repos cannot exceed n_repos".into());
        }
        for (name, v) in [
            ("pre_rate", self.pre_rate),
            ("base_d24", self.base_d24),
            ("effect_scale", self.effect_scale),
            ("noise_sd", self.noise_sd),
            ("day2_ratio", self.day2_ratio),
            ("tail_ratio", self.tail_ratio),
            ("heavy_tail_factor", self.heavy_tail_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [("decay", self.decay), ("hourly_decay", self.hourly_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.show_hn_fraction) {
            return bad("show_hn_fraction must be in [0, 1]".into());
        }
        if self.span_days == 0 {
            return bad("span_days must be positive".into());
        }
        parse_instant_or_date(&self.start)?;
        Ok(())
    }

    /// Planted effect strengths, strongest first.
    pub fn importance_order(&self) -> Vec<String> {
        let mut e = [
            ("hn_score", self.effect_hn_score),
            ("baseline_stars", self.effect_baseline),
            ("hour_12_17", self.effect_hour),
        ];
        e.sort_by(|a, b| b.1.total_cmp(&a.1));
        e.iter().map(|(n, _)| n.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeatures {
    pub repo_age_days: f64,
    pub readme_length: u64,
    pub owner_is_org: bool,
    pub has_license: bool,
    pub title_length: u64,
    pub is_show_hn: bool,
    pub is_weekend: bool,
    pub hour_bin: u8,
    pub day_of_week: u8,
    pub hn_score: u64,
    pub hn_comments: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRepo {
    pub slug: RepoSlug,
    pub post_id: String,
    #[serde(with = "crate::time::ts_format")]
    pub t0: DateTime<Utc>,
    pub restricted: bool,
    pub baseline_stars: u64,
    pub d24: u64,
    pub d48: u64,
    pub d7: u64,
    pub daily: Vec<u32>,
    pub hourly: Vec<u32>,
    pub features: PlantedFeatures,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedCounts {
    pub hn_posts: usize,
    pub github_posts: usize,
    pub total_pairs: usize,
    pub valid_series: usize,
    pub show_hn_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDifference {
    pub grouping: String,
    pub target: Horizon,
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub counts: PlantedCounts,
    pub importance_order: Vec<String>,
    pub group_differences: Vec<PlantedDifference>,
    pub repos: Vec<PlantedRepo>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn valid_repos(&self) -> impl Iterator<Item = &PlantedRepo> {
        self.repos.iter().filter(|r| !r.restricted)
    }
}

/// Everything a generated corpus consists of, in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub posts: Vec<HnPost>,
    pub events: Vec<LaunchEvent>,
    pub snapshots: Vec<RepoSnapshot>,
    pub logs: Vec<StarEventLog>,
    pub truth: GroundTruth,
}

/// Splits `total` over `weights` by flooring the cumulative quota, so the
/// parts are non-negative integers summing exactly to `total`.
pub fn allocate(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    let mut prev = 0u64;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        let cum = if i + 1 == weights.len() {
            total
        } else {
            ((acc / sum) * total as f64 + 1e-9).floor().min(total as f64) as u64
        };
        let cum = cum.max(prev);
        out.push(cum - prev);
        prev = cum;
    }
    out
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    values
        .iter()
        .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
        .collect()
}

const NAME_WORDS: [&str; 12] = [
    "lattice", "ember", "quill", "harbor", "prism", "sable", "tidal", "vector", "cobalt", "meadow", "orbit", "fable",
];
const TITLE_WORDS: [&str; 10] = [
    "fast",
    "local",
    "open-source",
    "tiny",
    "pipeline",
    "toolkit",
    "for",
    "your",
    "with",
    "evaluation",
];
const LICENSES: [&str; 4] = ["MIT", "Apache-2.0", "GPL-3.0", "BSD-3-Clause"];
const TOPICS: [&str; 5] = ["llm", "rag", "agents", "nlp", "machine-learning"];

struct Draft {
    slug: RepoSlug,
    post: HnPost,
    created_at: DateTime<Utc>,
    readme_length: u64,
    license_id: Option<String>,
    topics: Vec<String>,
    owner_is_org: bool,
    old_stars: u64,
    background: Vec<u64>,
}

fn hour_of(ts: DateTime<Utc>) -> u32 {
    (ts.timestamp().rem_euclid(86_400) / 3_600) as u32
}

/// Monday = 0; the epoch fell on a Thursday.
fn weekday_of(ts: DateTime<Utc>) -> u8 {
    ((ts.timestamp().div_euclid(86_400) + 3).rem_euclid(7)) as u8
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = parse_instant_or_date(&spec.start)?;
    let span_secs = spec.span_days as i64 * 86_400;
    let background = allocate(
        (spec.pre_rate * WINDOW_HOURS as f64).round() as u64,
        &[1.0; WINDOW_HOURS],
    );

    let mut drafts = Vec::with_capacity(spec.n_repos);
    for i in 0..spec.n_repos {
        let owner_is_org = rng.random_bool(0.3);
        let owner = format!("{}{i:03}", if owner_is_org { "lab" } else { "dev" });
        let name = format!("{}-{i:03}", NAME_WORDS[rng.random_range(0..NAME_WORDS.len())]);
        let slug = RepoSlug::new(&owner, &name)?;
        let t0 = start + Duration::seconds(rng.random_range(0..span_secs));
        let is_show_hn = rng.random_bool(spec.show_hn_fraction);
        let keyword = &spec.keywords[rng.random_range(0..spec.keywords.len())];
        let mut title = format!(
            "{}{} - {} {}",
            if is_show_hn { "Show HN: " } else { "" },
            name,
            keyword,
            TITLE_WORDS[rng.random_range(0..TITLE_WORDS.len())]
        );
        for _ in 0..rng.random_range(0..6) {
            title.push(' ');
            title.push_str(TITLE_WORDS[rng.random_range(0..TITLE_WORDS.len())]);
        }
        let post = HnPost {
            post_id: (39_000_000 + 17 * i as u64 + rng.random_range(0..17)).to_string(),
            created_at: t0,
            title,
            url: format!("https://github.com/{owner}/{name}"),
            score: rng.random_range(2..=500),
            num_comments: rng.random_range(0..=150),
            is_show_hn,
        };
        let age_secs = rng.random_range(8 * 86_400..720 * 86_400i64);
        let readme_length = if rng.random_bool(0.1) {
            0
        } else {
            rng.random_range(200..12_000)
        };
        let license_id = if rng.random_bool(0.2) {
            None
        } else {
            Some(LICENSES[rng.random_range(0..LICENSES.len())].to_string())
        };
        let topics = TOPICS
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .map(|t| t.to_string())
            .collect();
        drafts.push(Draft {
            slug,
            post,
            created_at: t0 - Duration::seconds(age_secs),
            readme_length,
            license_id,
            topics,
            owner_is_org,
            old_stars: rng.random_range(0..=spec.max_old_stars),
            background: background.clone(),
        });
    }

    // planted launch bursts
    let pre_in_window: u64 = background[..PRE_HOURS].iter().sum();
    let z_score = standardize(&drafts.iter().map(|d| d.post.score as f64).collect::<Vec<_>>());
    let z_base = standardize(
        &drafts
            .iter()
            .map(|d| (d.old_stars + pre_in_window) as f64)
            .collect::<Vec<_>>(),
    );
    let z_hour = standardize(
        &drafts
            .iter()
            .map(|d| if hour_of(d.post.created_at) / 6 == 2 { 1.0 } else { 0.0 })
            .collect::<Vec<_>>(),
    );
    let day1_w: Vec<f64> = (0..24).map(|h| spec.hourly_decay.powi(h)).collect();
    let tail_days = WINDOW_DAYS - crate::align::LAUNCH_DAY - 2;
    let tail_w: Vec<f64> = (0..tail_days * 24).map(|h| spec.decay.powi((h / 24) as i32)).collect();

    let restricted_from = spec.n_repos - spec.restricted_repos;
    let mut repos = Vec::with_capacity(spec.n_repos);
    let mut snapshots = Vec::with_capacity(spec.n_repos);
    let mut logs = Vec::with_capacity(spec.n_repos);
    let mut events = Vec::with_capacity(spec.n_repos);
    let observed_at = drafts.iter().map(|d| d.post.created_at).max().expect("n_repos > 0") + Duration::days(14);
    for (i, d) in drafts.into_iter().enumerate() {
        let noise: f64 = rng.sample(StandardNormal);
        let signal =
            spec.effect_hn_score * z_score[i] + spec.effect_baseline * z_base[i] + spec.effect_hour * z_hour[i];
        let mut burst = (spec.base_d24 + spec.effect_scale * signal + spec.noise_sd * noise)
            .round()
            .max(0.0);
        if i < spec.heavy_tail_repos {
            burst = (burst * spec.heavy_tail_factor).round();
        }
        let burst = burst as u64;
        let day2 = (burst as f64 * spec.day2_ratio).round() as u64;
        let tail = (burst as f64 * spec.tail_ratio).round() as u64;
        let mut hourly: Vec<u64> = d.background.clone();
        for (h, c) in allocate(burst, &day1_w).into_iter().enumerate() {
            hourly[PRE_HOURS + h] += c;
        }
        for (h, c) in allocate(day2, &day1_w).into_iter().enumerate() {
            hourly[PRE_HOURS + 24 + h] += c;
        }
        for (h, c) in allocate(tail, &tail_w).into_iter().enumerate() {
            hourly[PRE_HOURS + 48 + h] += c;
        }

        let t0 = d.post.created_at;
        let window_start = t0 - Duration::hours(PRE_HOURS as i64);
        let mut stars: Vec<DateTime<Utc>> = Vec::new();
        let old_span = (window_start - d.created_at).num_seconds();
        for _ in 0..d.old_stars {
            stars.push(d.created_at + Duration::seconds(rng.random_range(0..old_span)));
        }
        for (h, &c) in hourly.iter().enumerate() {
            let hour_start = window_start + Duration::hours(h as i64);
            for _ in 0..c {
                stars.push(hour_start + Duration::seconds(rng.random_range(0..3_600)));
            }
        }
        stars.sort();

        let hourly: Vec<u32> = hourly.iter().map(|&c| c as u32).collect();
        let daily: Vec<u32> = hourly.chunks(24).map(|c| c.iter().sum()).collect();
        let sum = |from: usize, to: usize| hourly[from..to].iter().map(|&c| c as u64).sum::<u64>();
        let hour = hour_of(t0);
        let dow = weekday_of(t0);
        let restricted = i >= restricted_from;
        repos.push(PlantedRepo {
            slug: d.slug.clone(),
            post_id: d.post.post_id.clone(),
            t0,
            restricted,
            baseline_stars: d.old_stars + sum(0, PRE_HOURS),
            d24: sum(PRE_HOURS, PRE_HOURS + 24),
            d48: sum(PRE_HOURS, PRE_HOURS + 48),
            d7: sum(PRE_HOURS, WINDOW_HOURS),
            daily,
            hourly,
            features: PlantedFeatures {
                repo_age_days: (t0 - d.created_at).num_seconds() as f64 / 86_400.0,
                readme_length: d.readme_length,
                owner_is_org: d.owner_is_org,
                has_license: d.license_id.is_some(),
                title_length: d.post.title.chars().count() as u64,
                is_show_hn: d.post.is_show_hn,
                is_weekend: dow >= 5,
                hour_bin: (hour / 6) as u8,
                day_of_week: dow,
                hn_score: d.post.score,
                hn_comments: d.post.num_comments,
            },
        });
        snapshots.push(RepoSnapshot {
            slug: d.slug.clone(),
            created_at: d.created_at,
            license_id: d.license_id,
            readme_length: d.readme_length,
            topics: d.topics,
            owner_is_org: d.owner_is_org,
            stars_total: stars.len() as u64,
            fetched_at: observed_at,
        });
        logs.push(if restricted {
            StarEventLog {
                slug: d.slug.clone(),
                starred_at: Vec::new(),
                complete: false,
                reason: Some("stargazer listing restricted (HTTP 403)".into()),
            }
        } else {
            StarEventLog {
                slug: d.slug.clone(),
                starred_at: stars,
                complete: true,
                reason: None,
            }
        });
        events.push(LaunchEvent {
            slug: d.slug,
            post: d.post,
        });
    }

    // posts that must not become launches
    let mut posts: Vec<HnPost> = events.iter().map(|e| e.post.clone()).collect();
    let mut next_id = 45_000_000u64;
    let mut extra = |url: String, created_at: DateTime<Utc>, rng: &mut ChaCha8Rng, posts: &mut Vec<HnPost>| {
        next_id += 1 + rng.random_range(0..5);
        let keyword = &spec.keywords[rng.random_range(0..spec.keywords.len())];
        posts.push(HnPost {
            post_id: next_id.to_string(),
            created_at,
            title: format!(
                "Ask about {keyword} {}",
                TITLE_WORDS[rng.random_range(0..TITLE_WORDS.len())]
            ),
            url,
            score: rng.random_range(1..100),
            num_comments: rng.random_range(0..40),
            is_show_hn: false,
        });
    };
    for k in 0..spec.duplicate_posts {
        let later = events[k].post.created_at + Duration::seconds(rng.random_range(3_600..30 * 86_400));
        extra(events[k].post.url.clone(), later, &mut rng, &mut posts);
    }
    let random_instant = |rng: &mut ChaCha8Rng| start + Duration::seconds(rng.random_range(0..span_secs));
    for k in 0..spec.gist_posts {
        let at = random_instant(&mut rng);
        extra(
            format!("https://gist.github.com/dev{k:03}/abc{k}"),
            at,
            &mut rng,
            &mut posts,
        );
    }
    for k in 0..spec.non_github_posts {
        let at = random_instant(&mut rng);
        extra(format!("https://example.com/blog/post-{k}"), at, &mut rng, &mut posts);
    }
    for _ in 0..spec.no_url_posts {
        let at = random_instant(&mut rng);
        extra(String::new(), at, &mut rng, &mut posts);
    }
    crate::hn::sort_posts(&mut posts);

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        events[a]
            .post
            .created_at
            .cmp(&events[b].post.created_at)
            .then_with(|| crate::model::compare_post_ids(&events[a].post.post_id, &events[b].post.post_id))
            .then_with(|| events[a].slug.cmp(&events[b].slug))
    });
    let events = reorder(&events, &order);
    let snapshots = reorder(&snapshots, &order);
    let logs = reorder(&logs, &order);
    let repos = reorder(&repos, &order);

    let valid: Vec<&PlantedRepo> = repos.iter().filter(|r| !r.restricted).collect();
    let counts = PlantedCounts {
        hn_posts: posts.len(),
        github_posts: spec.n_repos + spec.duplicate_posts,
        total_pairs: spec.n_repos,
        valid_series: valid.len(),
        show_hn_rows: valid.iter().filter(|r| r.features.is_show_hn).count(),
    };
    let truth = GroundTruth {
        spec: spec.clone(),
        counts,
        importance_order: spec.importance_order(),
        group_differences: planted_differences(&valid),
        repos,
    };
    Ok(Corpus {
        posts,
        events,
        snapshots,
        logs,
        truth,
    })
}

fn reorder<T: Clone>(items: &[T], order: &[usize]) -> Vec<T> {
    order.iter().map(|&i| items[i].clone()).collect()
}

fn planted_differences(valid: &[&PlantedRepo]) -> Vec<PlantedDifference> {
    let target = |r: &PlantedRepo, h: Horizon| match h {
        Horizon::H24 => r.d24,
        Horizon::H48 => r.d48,
        Horizon::D7 => r.d7,
    } as f64;
    let mut out = Vec::new();
    type Key = fn(&PlantedRepo) -> usize;
    let groupings: [(&str, usize, Key); 3] = [
        ("show_hn", 2, |r| r.features.is_show_hn as usize),
        ("weekend", 2, |r| r.features.is_weekend as usize),
        ("hour_bin", 4, |r| r.features.hour_bin as usize),
    ];
    for (name, k, key) in groupings {
        for h in Horizon::ALL {
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for r in valid {
                sums[key(r)] += target(r, h);
                counts[key(r)] += 1;
            }
            let means: Vec<Option<f64>> = (0..k)
                .map(|g| (counts[g] > 0).then(|| sums[g] / counts[g] as f64))
                .collect();
            let difference = if k == 2 {
                match (means[0], means[1]) {
                    (Some(a), Some(b)) => Some(b - a),
                    _ => None,
                }
            } else {
                let present: Vec<f64> = means.iter().flatten().copied().collect();
                (present.len() >= 2).then(|| {
                    present.iter().copied().fold(f64::MIN, f64::max) - present.iter().copied().fold(f64::MAX, f64::min)
                })
            };
            out.push(PlantedDifference {
                grouping: name.into(),
                target: h,
                difference,
            });
        }
    }
    out
}

/// Writes the raw data tree and the ground-truth file under `layout`.
pub fn write_corpus(corpus: &Corpus, layout: &DataLayout) -> Result<()> {
    write_jsonl(&layout.hn_posts(), &corpus.posts)?;
    write_jsonl(&layout.pairs(), &corpus.events)?;
    write_jsonl(&layout.repos(), &corpus.snapshots)?;
    for log in &corpus.logs {
        write_star_log(&layout.star_log(&log.slug), log)?;
    }
    let mut bytes = serde_json::to_vec_pretty(&corpus.truth).map_err(|e| Error::parse("ground truth", e))?;
    bytes.push(b'\n');
    write_atomic(&layout.synth_manifest(), &bytes)
}

fn keyword_file(keyword: &str) -> String {
    keyword
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    serde_json::to_vec(v).expect("json value serializes")
}

/// Renders the corpus as canned Algolia and GitHub responses plus the
/// `index.jsonl` routing table read by the fixture transport.
pub fn render_api_fixtures(corpus: &Corpus, dir: &Path, range: DateRange, keywords: &[String]) -> Result<()> {
    let mut routes: Vec<FixtureRoute> = Vec::new();
    let mut put = |rel: String, body: &[u8], request: String, status: u16| -> Result<()> {
        write_atomic(&dir.join(&rel), body)?;
        routes.push(FixtureRoute {
            request,
            status,
            file: rel,
        });
        Ok(())
    };

    for keyword in keywords {
        let needle = keyword.to_lowercase();
        let mut hits: Vec<&HnPost> = corpus
            .posts
            .iter()
            .filter(|p| range.contains(p.created_at) && p.title.to_lowercase().contains(&needle))
            .collect();
        hits.reverse();
        let per_page = HITS_PER_PAGE as usize;
        let nb_pages = hits.len().div_ceil(per_page);
        for page in 0..nb_pages.max(1) {
            let chunk: Vec<serde_json::Value> = hits
                .iter()
                .skip(page * per_page)
                .take(per_page)
                .map(|p| {
                    let mut tags = vec![json!("story"), json!(format!("story_{}", p.post_id))];
                    if p.is_show_hn {
                        tags.push(json!("show_hn"));
                    }
                    json!({
                        "objectID": p.post_id,
                        "title": p.title,
                        "url": if p.url.is_empty() { serde_json::Value::Null } else { json!(p.url) },
                        "points": p.score,
                        "num_comments": p.num_comments,
                        "created_at": format_ts(&p.created_at),
                        "created_at_i": p.created_at.timestamp(),
                        "_tags": tags,
                    })
                })
                .collect();
            let body = json!({
                "hits": chunk,
                "nbHits": hits.len(),
                "nbPages": nb_pages,
                "page": page,
                "hitsPerPage": per_page,
            });
            let request = search_request(ALGOLIA_BASE, keyword, range, page as u32).canonical()?;
            put(
                format!("hn/{}_{page}.json", keyword_file(keyword)),
                &json_bytes(&body),
                request,
                200,
            )?;
        }
    }

    for (snapshot, log) in corpus.snapshots.iter().zip(&corpus.logs) {
        let slug = &snapshot.slug;
        let stem = slug.file_stem();
        let (owner_kind, license) = (
            if snapshot.owner_is_org { "Organization" } else { "User" },
            snapshot
                .license_id
                .as_ref()
                .map(|id| json!({"key": id.to_lowercase(), "spdx_id": id}))
                .unwrap_or(serde_json::Value::Null),
        );
        let repo = json!({
            "full_name": slug.to_string(),
            "created_at": format_ts(&snapshot.created_at),
            "license": license,
            "topics": snapshot.topics,
            "owner": {"login": slug.owner(), "type": owner_kind},
            "stargazers_count": snapshot.stars_total,
        });
        put(
            format!("github/{stem}.json"),
            &json_bytes(&repo),
            repo_request(GITHUB_API, slug).canonical()?,
            200,
        )?;
        let readme_req = readme_request(GITHUB_API, slug).canonical()?;
        if snapshot.readme_length == 0 {
            put(
                format!("github/{stem}.readme.json"),
                br#"{"message":"Not Found"}"#,
                readme_req,
                404,
            )?;
        } else {
            let mut text = format!("# {}\n\n", slug.name()).into_bytes();
            let filler = b"Synthetic readme text. ";
            while (text.len() as u64) < snapshot.readme_length {
                text.push(filler[text.len() % filler.len()]);
            }
            text.truncate(snapshot.readme_length as usize);
            put(format!("github/{stem}.readme.md"), &text, readme_req, 200)?;
        }
        if !log.complete {
            put(
                format!("github/{stem}.stars_1.json"),
                br#"{"message":"Resource not accessible"}"#,
                stargazers_request(GITHUB_API, slug, 1).canonical()?,
                403,
            )?;
            continue;
        }
        // Every listing ends with a short (possibly empty) page.
        let all = &log.starred_at;
        let pages = all.len() / STAR_PAGE_SIZE + 1;
        for page in 0..pages {
            let items: Vec<serde_json::Value> = all
                .iter()
                .skip(page * STAR_PAGE_SIZE)
                .take(STAR_PAGE_SIZE)
                .map(|ts| json!({"starred_at": format_ts(ts)}))
                .collect();
            put(
                format!("github/{stem}.stars_{}.json", page + 1),
                &json_bytes(&serde_json::Value::Array(items)),
                stargazers_request(GITHUB_API, slug, page as u32 + 1).canonical()?,
                200,
            )?;
        }
    }

    routes.sort_by(|a, b| a.request.cmp(&b.request));
    let mut index = Vec::new();
    for r in &routes {
        serde_json::to_writer(&mut index, r).expect("route serializes");
        index.push(b'\n');
    }
    write_atomic(&dir.join(FIXTURE_INDEX), &index)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: usize,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, failure: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(failure());
        }
    }
}

fn stat(table: &Table, name: &str) -> Option<String> {
    table.rows.iter().find(|r| r[0] == name).map(|r| r[1].clone())
}

/// Compares pipeline outputs with the planted values: counts and deltas
/// exactly, rounded table cells as formatted strings, importances by rank.
pub fn verify_against_manifest(data: &DataLayout, out: &OutLayout, truth: &GroundTruth) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let series: Vec<AlignedSeries> = read_jsonl(&data.series())?;
    let by_slug: BTreeMap<&RepoSlug, &AlignedSeries> = series.iter().map(|s| (&s.slug, s)).collect();
    let rows = parse_rows_table(&Table::read(&data.feature_rows())?)?;
    let rows_by_slug: BTreeMap<&RepoSlug, &FeatureRow> = rows.iter().map(|r| (&r.slug, r)).collect();

    report.check(series.len() == truth.counts.valid_series, || {
        format!(
            "series count: expected {}, got {}",
            truth.counts.valid_series,
            series.len()
        )
    });
    for r in &truth.repos {
        let got = by_slug.get(&r.slug);
        if r.restricted {
            report.check(got.is_none(), || format!("{}: restricted repo has a series", r.slug));
            continue;
        }
        let Some(s) = got else {
            report.check(false, || format!("{}: series missing", r.slug));
            continue;
        };
        report.check(s.t0 == r.t0, || format!("{}.t0 differs", r.slug));
        report.check(s.hourly == r.hourly, || format!("{}.hourly differs", r.slug));
        report.check(s.daily == r.daily, || format!("{}.daily differs", r.slug));
        report.check(s.baseline_stars == r.baseline_stars, || {
            format!(
                "{}.baseline_stars: expected {}, got {}",
                r.slug, r.baseline_stars, s.baseline_stars
            )
        });
        for (h, want) in [(Horizon::H24, r.d24), (Horizon::H48, r.d48), (Horizon::D7, r.d7)] {
            let got = s.delta(h);
            report.check(got == want, || {
                format!("{}.{}: expected {want}, got {got}", r.slug, h.key())
            });
        }
        let Some(row) = rows_by_slug.get(&r.slug) else {
            report.check(false, || format!("{}: feature row missing", r.slug));
            continue;
        };
        let f = &r.features;
        let fields: [(&str, bool); 15] = [
            ("repo_age_days", row.repo_age_days == f.repo_age_days),
            ("readme_length", row.readme_length == f.readme_length),
            ("owner_is_org", row.owner_is_org == f.owner_is_org),
            ("has_license", row.has_license == f.has_license),
            ("title_length", row.title_length == f.title_length),
            ("is_show_hn", row.is_show_hn == f.is_show_hn),
            ("is_weekend", row.is_weekend == f.is_weekend),
            ("hour_bin", row.hour_bin == f.hour_bin),
            ("day_of_week", row.day_of_week == f.day_of_week),
            ("hn_score", row.hn_score == f.hn_score),
            ("hn_comments", row.hn_comments == f.hn_comments),
            ("baseline_stars", row.baseline_stars == r.baseline_stars),
            ("d24", row.d24 == r.d24),
            ("d48", row.d48 == r.d48),
            ("d7", row.d7 == r.d7),
        ];
        for (name, ok) in fields {
            report.check(ok, || format!("{}: feature {name} differs from planted value", r.slug));
        }
    }

    let stats = Table::read(&out.table(DATASET_STATS))?;
    for (label, want) in [
        (STAT_TOTAL_PAIRS, truth.counts.total_pairs),
        (STAT_VALID_SERIES, truth.counts.valid_series),
        (STAT_SHOW_HN, truth.counts.show_hn_rows),
    ] {
        let got = stat(&stats, label);
        report.check(got.as_deref() == Some(want.to_string().as_str()), || {
            format!("{label}: expected {want}, got {got:?}")
        });
    }

    let valid: Vec<&PlantedRepo> = truth.valid_repos().collect();
    if !valid.is_empty() {
        let curves = Table::read(&out.table(EVENT_CURVES))?;
        for (d, row) in curves.rows.iter().enumerate().take(WINDOW_DAYS) {
            let mut total = 0.0;
            for r in &valid {
                total += r.daily[..=d].iter().map(|&v| v as f64).sum::<f64>();
            }
            let want = fmt_stars(total / valid.len() as f64);
            let got = curves.get(row, "mean").unwrap_or("");
            report.check(got == want, || {
                format!("event curve day index {d}: expected {want}, got {got}")
            });
        }
    }

    let groups = Table::read(&out.table(GROUP_COMPARISONS))?;
    for pd in &truth.group_differences {
        let row = groups.rows.iter().find(|r| {
            groups.get(r, "grouping") == Some(&pd.grouping) && groups.get(r, "target") == Some(pd.target.label())
        });
        let got = row.and_then(|r| groups.get(r, "difference")).unwrap_or("");
        let want = pd.difference.map(fmt_stars).unwrap_or_default();
        report.check(got == want, || {
            format!(
                "{} difference at {}: expected {want:?}, got {got:?}",
                pd.grouping,
                pd.target.label()
            )
        });
    }

    if truth.spec.check_importance {
        let path = out.models_dir().join("report_gbt_d24_with_leaky.csv");
        let t = Table::read(&path)?;
        let ranked: Vec<&str> = t
            .rows
            .iter()
            .filter(|r| r[0] == "importance")
            .map(|r| r[1].as_str())
            .collect();
        let positions: Vec<Option<usize>> = truth
            .importance_order
            .iter()
            .map(|name| ranked.iter().position(|c| c == name))
            .collect();
        let ordered = positions.iter().all(Option::is_some) && positions.windows(2).all(|w| w[0] < w[1]);
        report.check(ordered, || {
            format!(
                "importance order: planted {:?}, recovered ranking {:?}",
                truth.importance_order,
                &ranked[..ranked.len().min(6)]
            )
        });
    }
    Ok(report)
}

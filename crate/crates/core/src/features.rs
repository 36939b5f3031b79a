//! Modeling rows with pre-launch predictors kept apart from quantities that
//! only exist after launch, plus design-matrix assembly.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Timelike, Utc};

use crate::align::{AlignedSeries, Horizon};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{LaunchEvent, RepoSlug, RepoSnapshot};
use crate::report::table::Table;
use crate::time::{format_ts, parse_ts};

/// Labels of the four UTC posting-time bins.
pub const HOUR_BIN_LABELS: [&str; 4] = ["00-05", "06-11", "12-17", "18-23"];

pub fn hour_bin(hour_utc: u32) -> Result<u8> {
    match hour_utc {
        0..=5 => Ok(0),
        6..=11 => Ok(1),
        12..=17 => Ok(2),
        18..=23 => Ok(3),
        _ => Err(Error::invalid(format!("hour {hour_utc} outside 0-23"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub slug: RepoSlug,
    pub t0: DateTime<Utc>,
    // pre-launch
    pub baseline_stars: u64,
    pub repo_age_days: f64,
    pub readme_length: u64,
    pub owner_is_org: bool,
    pub has_license: bool,
    pub title_length: u64,
    pub is_show_hn: bool,
    pub is_weekend: bool,
    pub hour_bin: u8,
    /// Monday = 0.
    pub day_of_week: u8,
    // leaky
    pub hn_score: u64,
    pub hn_comments: u64,
    pub launch_day_stars: u64,
    // targets
    pub d24: u64,
    pub d48: u64,
    pub d7: u64,
    // recorded, not encoded
    pub license_id: Option<String>,
    pub topics: Vec<String>,
}

impl FeatureRow {
    pub fn target(&self, horizon: Horizon) -> u64 {
        match horizon {
            Horizon::H24 => self.d24,
            Horizon::H48 => self.d48,
            Horizon::D7 => self.d7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Row(FeatureRow),
    Rejected { slug: RepoSlug, reason: String },
}

pub fn build_feature_row(event: &LaunchEvent, snapshot: &RepoSnapshot, series: &AlignedSeries) -> Result<RowOutcome> {
    if event.slug != snapshot.slug || event.slug != series.slug {
        return Err(Error::invalid(format!(
            "slug mismatch: event {}, snapshot {}, series {}",
            event.slug, snapshot.slug, series.slug
        )));
    }
    let t0 = event.t0();
    if series.t0 != t0 {
        return Err(Error::invalid(format!(
            "{}: series is aligned to a different t0",
            event.slug
        )));
    }
    let age_secs = (t0 - snapshot.created_at).num_seconds();
    if age_secs < 0 {
        return Ok(RowOutcome::Rejected {
            slug: event.slug.clone(),
            reason: format!(
                "repository created {} after launch {}",
                format_ts(&snapshot.created_at),
                format_ts(&t0)
            ),
        });
    }
    let day_of_week = t0.weekday().num_days_from_monday() as u8;
    let d24 = series.delta(Horizon::H24);
    Ok(RowOutcome::Row(FeatureRow {
        slug: event.slug.clone(),
        t0,
        baseline_stars: series.baseline_stars,
        repo_age_days: age_secs as f64 / 86_400.0,
        readme_length: snapshot.readme_length,
        owner_is_org: snapshot.owner_is_org,
        has_license: snapshot.license_id.is_some(),
        title_length: event.post.title.chars().count() as u64,
        is_show_hn: event.post.is_show_hn,
        is_weekend: day_of_week >= 5,
        hour_bin: hour_bin(t0.hour())?,
        day_of_week,
        hn_score: event.post.score,
        hn_comments: event.post.num_comments,
        launch_day_stars: d24,
        d24,
        d48: series.delta(Horizon::H48),
        d7: series.delta(Horizon::D7),
        license_id: snapshot.license_id.clone(),
        topics: snapshot.topics.clone(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSet {
    PreLaunchOnly,
    WithLeaky,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 2] = [FeatureSet::PreLaunchOnly, FeatureSet::WithLeaky];

    pub fn key(self) -> &'static str {
        match self {
            FeatureSet::PreLaunchOnly => "pre_launch_only",
            FeatureSet::WithLeaky => "with_leaky",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.key() == text)
            .ok_or_else(|| Error::invalid(format!("unknown feature set {text:?}")))
    }
}

pub const INTERCEPT: &str = "intercept";

/// Design columns for pre-launch-only matrices, in order. Hour bin 00-05 is
/// the reference hour; weekdays are contrasted against Monday, with Saturday
/// and Sunday carried by `is_weekend`.
pub const PRE_LAUNCH_COLUMNS: [&str; 16] = [
    INTERCEPT,
    "baseline_stars",
    "repo_age_days",
    "readme_length",
    "owner_is_org",
    "has_license",
    "title_length",
    "is_show_hn",
    "is_weekend",
    "hour_06_11",
    "hour_12_17",
    "hour_18_23",
    "dow_tue",
    "dow_wed",
    "dow_thu",
    "dow_fri",
];

pub const LEAKY_COLUMNS: [&str; 3] = ["hn_score", "hn_comments", "launch_day_stars"];

/// Quantities a model predicting `target` must never see.
pub fn target_defining_columns(target: Horizon) -> &'static [&'static str] {
    match target {
        Horizon::H24 => &["d24", "d48", "d7", "launch_day_stars"],
        Horizon::H48 => &["d48", "d7"],
        Horizon::D7 => &["d7"],
    }
}

pub fn design_columns(feature_set: FeatureSet, target: Horizon) -> Vec<&'static str> {
    let mut cols = PRE_LAUNCH_COLUMNS.to_vec();
    if feature_set == FeatureSet::WithLeaky {
        cols.extend(
            LEAKY_COLUMNS
                .iter()
                .filter(|c| !target_defining_columns(target).contains(c)),
        );
    }
    cols
}

fn column_value(row: &FeatureRow, column: &str) -> f64 {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    match column {
        INTERCEPT => 1.0,
        "baseline_stars" => row.baseline_stars as f64,
        "repo_age_days" => row.repo_age_days,
        "readme_length" => row.readme_length as f64,
        "owner_is_org" => flag(row.owner_is_org),
        "has_license" => flag(row.has_license),
        "title_length" => row.title_length as f64,
        "is_show_hn" => flag(row.is_show_hn),
        "is_weekend" => flag(row.is_weekend),
        "hour_06_11" => flag(row.hour_bin == 1),
        "hour_12_17" => flag(row.hour_bin == 2),
        "hour_18_23" => flag(row.hour_bin == 3),
        "dow_tue" => flag(row.day_of_week == 1),
        "dow_wed" => flag(row.day_of_week == 2),
        "dow_thu" => flag(row.day_of_week == 3),
        "dow_fri" => flag(row.day_of_week == 4),
        "hn_score" => row.hn_score as f64,
        "hn_comments" => row.hn_comments as f64,
        "launch_day_stars" => row.launch_day_stars as f64,
        other => unreachable!("unknown design column {other}"),
    }
}

/// Value of a named predictor for one row; used by regressions that pick
/// their own column subsets.
pub fn value_of(row: &FeatureRow, column: &str) -> Result<f64> {
    if PRE_LAUNCH_COLUMNS.contains(&column) || LEAKY_COLUMNS.contains(&column) {
        Ok(column_value(row, column))
    } else {
        Err(Error::invalid(format!("unknown predictor {column:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub columns: Vec<String>,
    /// Non-intercept columns with a single value across all rows.
    pub constant_columns: Vec<String>,
}

pub fn assemble_design_matrix(rows: &[FeatureRow], feature_set: FeatureSet, target: Horizon) -> Result<DesignMatrix> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot assemble a design matrix from zero rows"));
    }
    let columns = design_columns(feature_set, target);
    let mut x = Matrix::zeros(rows.len(), columns.len());
    for (i, row) in rows.iter().enumerate() {
        for (j, col) in columns.iter().enumerate() {
            x[(i, j)] = column_value(row, col);
        }
    }
    let constant_columns: Vec<String> = columns
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(j, _)| {
            let first = x[(0, j)];
            (1..rows.len()).all(|i| x[(i, j)] == first)
        })
        .map(|(_, c)| c.to_string())
        .collect();
    for c in &constant_columns {
        log::warn!("design column {c} is constant across {} rows", rows.len());
    }
    Ok(DesignMatrix {
        x,
        y: rows.iter().map(|r| r.target(target) as f64).collect(),
        columns: columns.into_iter().map(String::from).collect(),
        constant_columns,
    })
}

pub fn matrix_table(design: &DesignMatrix, target: Horizon) -> Table {
    let mut header = design.columns.clone();
    header.push(format!("target:{}", target.key()));
    let mut table = Table::new(&header);
    for i in 0..design.x.nrows() {
        let mut row: Vec<String> = design.x.row(i).iter().map(|v| v.to_string()).collect();
        row.push(design.y[i].to_string());
        table.push(row);
    }
    table
}

const ROW_HEADER: [&str; 20] = [
    "id:slug",
    "id:t0",
    "pre:baseline_stars",
    "pre:repo_age_days",
    "pre:readme_length",
    "pre:owner_is_org",
    "pre:has_license",
    "pre:title_length",
    "pre:is_show_hn",
    "pre:is_weekend",
    "pre:hour_bin",
    "pre:day_of_week",
    "leaky:hn_score",
    "leaky:hn_comments",
    "leaky:launch_day_stars",
    "target:d24",
    "target:d48",
    "target:d7",
    "meta:license_id",
    "meta:topics",
];

pub fn rows_table(rows: &[FeatureRow]) -> Table {
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    let mut table = Table::new(&ROW_HEADER);
    for r in rows {
        table.push(vec![
            r.slug.to_string(),
            format_ts(&r.t0),
            r.baseline_stars.to_string(),
            r.repo_age_days.to_string(),
            r.readme_length.to_string(),
            b(r.owner_is_org),
            b(r.has_license),
            r.title_length.to_string(),
            b(r.is_show_hn),
            b(r.is_weekend),
            r.hour_bin.to_string(),
            r.day_of_week.to_string(),
            r.hn_score.to_string(),
            r.hn_comments.to_string(),
            r.launch_day_stars.to_string(),
            r.d24.to_string(),
            r.d48.to_string(),
            r.d7.to_string(),
            r.license_id.clone().unwrap_or_default(),
            r.topics.join(";"),
        ]);
    }
    table
}

pub fn parse_rows_table(table: &Table) -> Result<Vec<FeatureRow>> {
    let idx: BTreeMap<&str, usize> = ROW_HEADER
        .iter()
        .map(|h| {
            table
                .column_index(h)
                .map(|j| (*h, j))
                .ok_or_else(|| Error::parse("feature rows", format!("missing column {h}")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (lineno, rec) in table.rows.iter().enumerate() {
        let field = |name: &str| rec[idx[name]].as_str();
        let ctx = |name: &str| format!("feature rows line {} column {name}", lineno + 2);
        let int = |name: &str| -> Result<u64> { field(name).parse().map_err(|e| Error::parse(ctx(name), e)) };
        let small = |name: &str| -> Result<u8> { field(name).parse().map_err(|e| Error::parse(ctx(name), e)) };
        let flag = |name: &str| -> Result<bool> {
            match field(name) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::parse(ctx(name), format!("expected 0/1, got {other:?}"))),
            }
        };
        let license = field("meta:license_id");
        let topics = field("meta:topics");
        rows.push(FeatureRow {
            slug: field("id:slug").parse()?,
            t0: parse_ts(field("id:t0"))?,
            baseline_stars: int("pre:baseline_stars")?,
            repo_age_days: field("pre:repo_age_days")
                .parse()
                .map_err(|e| Error::parse(ctx("pre:repo_age_days"), e))?,
            readme_length: int("pre:readme_length")?,
            owner_is_org: flag("pre:owner_is_org")?,
            has_license: flag("pre:has_license")?,
            title_length: int("pre:title_length")?,
            is_show_hn: flag("pre:is_show_hn")?,
            is_weekend: flag("pre:is_weekend")?,
            hour_bin: small("pre:hour_bin")?,
            day_of_week: small("pre:day_of_week")?,
            hn_score: int("leaky:hn_score")?,
            hn_comments: int("leaky:hn_comments")?,
            launch_day_stars: int("leaky:launch_day_stars")?,
            d24: int("target:d24")?,
            d48: int("target:d48")?,
            d7: int("target:d7")?,
            license_id: (!license.is_empty()).then(|| license.to_string()),
            topics: if topics.is_empty() {
                Vec::new()
            } else {
                topics.split(';').map(str::to_string).collect()
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{bucket_hourly, build_window};
    use crate::model::{HnPost, StarEventLog};
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;

    fn fixture(t0: DateTime<Utc>, created: DateTime<Utc>) -> (LaunchEvent, RepoSnapshot, AlignedSeries) {
        let slug: RepoSlug = "acme/widget".parse().unwrap();
        let event = LaunchEvent {
            slug: slug.clone(),
            post: HnPost {
                post_id: "1".into(),
                created_at: t0,
                title: "Show HN: Widget, an LLM thing".into(),
                url: "https://github.com/acme/widget".into(),
                score: 187,
                num_comments: 42,
                is_show_hn: true,
            },
        };
        let snapshot = RepoSnapshot {
            slug: slug.clone(),
            created_at: created,
            license_id: None,
            readme_length: 0,
            topics: vec!["llm".into(), "rag".into()],
            owner_is_org: true,
            stars_total: 10,
            fetched_at: t0 + Duration::days(30),
        };
        let log = StarEventLog {
            slug,
            starred_at: vec![
                t0 - Duration::days(30),
                t0 + Duration::hours(1),
                t0 + Duration::hours(30),
            ],
            complete: true,
            reason: None,
        };
        let series = bucket_hourly(&log, &build_window(t0)).unwrap();
        (event, snapshot, series)
    }

    fn row_of(outcome: RowOutcome) -> FeatureRow {
        match outcome {
            RowOutcome::Row(r) => r,
            RowOutcome::Rejected { reason, .. } => panic!("rejected: {reason}"),
        }
    }

    #[test]
    fn hour_bins() {
        assert_eq!(hour_bin(0).unwrap(), 0);
        assert_eq!(hour_bin(13).unwrap(), 2);
        assert_eq!(hour_bin(23).unwrap(), 3);
        assert!(hour_bin(24).is_err());
    }

    #[test]
    fn saturday_afternoon_launch() {
        let t0 = Utc.with_ymd_and_hms(2024, 6, 1, 13, 0, 0).unwrap(); // a Saturday
        let (e, s, a) = fixture(t0, t0 - Duration::days(10));
        let row = row_of(build_feature_row(&e, &s, &a).unwrap());
        assert_eq!((row.is_weekend, row.hour_bin, row.day_of_week), (true, 2, 5));
        assert_eq!(row.repo_age_days, 10.0);
        assert_eq!(row.baseline_stars, 1);
        assert_eq!((row.d24, row.d48, row.d7, row.launch_day_stars), (1, 2, 2, 1));
        assert!(!row.has_license);
        assert_eq!(row.readme_length, 0);
        assert_eq!(row.title_length, 29);
    }

    #[test]
    fn age_boundary_and_rejection() {
        let t0 = Utc.with_ymd_and_hms(2024, 6, 3, 2, 0, 0).unwrap();
        let (e, s, a) = fixture(t0, t0);
        assert_eq!(row_of(build_feature_row(&e, &s, &a).unwrap()).repo_age_days, 0.0);
        let (e, s, a) = fixture(t0, t0 + Duration::hours(1));
        assert!(matches!(
            build_feature_row(&e, &s, &a).unwrap(),
            RowOutcome::Rejected { .. }
        ));
    }

    #[test]
    fn slug_mismatch_is_an_error() {
        let t0 = Utc.with_ymd_and_hms(2024, 6, 3, 2, 0, 0).unwrap();
        let (e, mut s, a) = fixture(t0, t0);
        s.slug = "other/repo".parse().unwrap();
        assert!(build_feature_row(&e, &s, &a).is_err());
    }

    fn sample_rows(n: usize) -> Vec<FeatureRow> {
        let base = Utc.with_ymd_and_hms(2024, 6, 3, 0, 0, 0).unwrap();
        (0..n)
            .map(|i| {
                let t0 = base + Duration::hours(7 * i as i64);
                let (e, s, a) = fixture(t0, t0 - Duration::days(i as i64));
                row_of(build_feature_row(&e, &s, &a).unwrap())
            })
            .collect()
    }

    #[test]
    fn pre_launch_arity() {
        let d = assemble_design_matrix(&sample_rows(1), FeatureSet::PreLaunchOnly, Horizon::H48).unwrap();
        assert_eq!(d.x.nrows(), 1);
        assert_eq!(d.x.ncols(), 16);
        assert_eq!(d.columns[0], INTERCEPT);
    }

    #[test]
    fn reference_hour_has_no_dummies() {
        let mut rows = sample_rows(5);
        for r in &mut rows {
            r.hour_bin = 0;
        }
        let d = assemble_design_matrix(&rows, FeatureSet::PreLaunchOnly, Horizon::H24).unwrap();
        for name in ["hour_06_11", "hour_12_17", "hour_18_23"] {
            let j = d.columns.iter().position(|c| c == name).unwrap();
            assert!(d.x.column(j).iter().all(|&v| v == 0.0));
            assert!(d.constant_columns.contains(&name.to_string()));
        }
    }

    #[test]
    fn leaky_adds_three_columns_for_longer_horizons() {
        let rows = sample_rows(6);
        for target in [Horizon::H48, Horizon::D7] {
            let pre = assemble_design_matrix(&rows, FeatureSet::PreLaunchOnly, target).unwrap();
            let leaky = assemble_design_matrix(&rows, FeatureSet::WithLeaky, target).unwrap();
            assert_eq!(leaky.x.ncols(), pre.x.ncols() + 3);
            assert_eq!(&leaky.columns[16..], &["hn_score", "hn_comments", "launch_day_stars"]);
        }
        let d24 = assemble_design_matrix(&rows, FeatureSet::WithLeaky, Horizon::H24).unwrap();
        assert_eq!(d24.x.ncols(), 18);
    }

    #[test]
    fn leakage_guard() {
        let deny_all = ["d24", "d48", "d7", "target:d24", "target:d48", "target:d7"];
        for fs in FeatureSet::ALL {
            for target in Horizon::ALL {
                let cols = design_columns(fs, target);
                for banned in target_defining_columns(target).iter().chain(deny_all.iter()) {
                    assert!(!cols.contains(banned), "{fs:?}/{target:?} leaks {banned}");
                }
                if fs == FeatureSet::PreLaunchOnly {
                    for leaky in LEAKY_COLUMNS {
                        assert!(!cols.contains(&leaky));
                    }
                }
            }
        }
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(assemble_design_matrix(&[], FeatureSet::PreLaunchOnly, Horizon::H24).is_err());
    }

    proptest! {
        #[test]
        fn one_hot_and_weekend_consistency(hours in proptest::collection::vec(0u32..24, 1..20), days in 0u8..7) {
            let mut rows = sample_rows(hours.len());
            for (r, h) in rows.iter_mut().zip(&hours) {
                r.hour_bin = hour_bin(*h).unwrap();
                r.day_of_week = days;
                r.is_weekend = days >= 5;
            }
            let d = assemble_design_matrix(&rows, FeatureSet::PreLaunchOnly, Horizon::H48).unwrap();
            for (i, r) in rows.iter().enumerate() {
                let hour_sum: f64 = (9..12).map(|j| d.x[(i, j)]).sum();
                prop_assert_eq!(hour_sum == 1.0, r.hour_bin != 0);
                prop_assert_eq!(hour_sum == 0.0, r.hour_bin == 0);
                let day_sum: f64 = (12..16).map(|j| d.x[(i, j)]).sum();
                prop_assert!(day_sum + d.x[(i, 8)] <= 1.0);
            }
        }

        #[test]
        fn rows_csv_round_trip(age in 0.0f64..5000.0, stars in 0u64..100_000, title in "[ -~]{0,40}") {
            let mut rows = sample_rows(2);
            rows[0].repo_age_days = age;
            rows[0].baseline_stars = stars;
            rows[1].license_id = Some("Apache-2.0".into());
            rows[1].topics = vec![];
            let _ = title;
            let table = rows_table(&rows);
            let reparsed = Table::parse(&table.to_bytes(), "rows").unwrap();
            prop_assert_eq!(parse_rows_table(&reparsed).unwrap(), rows);
        }
    }
}

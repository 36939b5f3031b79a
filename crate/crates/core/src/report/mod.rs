//! Output tree: CSV tables, SVG figures, text summaries and the manifest.

pub mod summary;
pub mod svg;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

use crate::align::Horizon;
use crate::error::{Error, Result};
use crate::eventstudy::{EventCurve, GroupComparison, Grouping, HorizonEffect};
use svg::{FigureKind, FigureSpec, Series};
use table::{fmt_opt, fmt_stars, Table};

#[derive(Debug, Clone)]
pub struct OutLayout {
    pub root: PathBuf,
}

impl OutLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.root.join("tables")
    }

    pub fn table(&self, stem: &str) -> PathBuf {
        self.tables_dir().join(format!("{stem}.csv"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn figure(&self, stem: &str) -> PathBuf {
        self.root.join("figures").join(format!("{stem}.svg"))
    }

    pub fn summary_inference(&self) -> PathBuf {
        self.root.join("summary_inference.txt")
    }

    pub fn summary_report(&self) -> PathBuf {
        self.root.join("summary_report.txt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }
}

pub const EVENT_CURVES: &str = "event_curves";
pub const LAUNCH_EFFECTS: &str = "launch_effects";
pub const GROUP_COMPARISONS: &str = "group_comparisons";
pub const MODEL_PERFORMANCE: &str = "model_performance";
pub const DATASET_STATS: &str = "dataset_stats";
pub const EVENT_CURVE_FIGURE: &str = "event_curves";
pub const HOUR_FIGURE: &str = "hour_of_day";

pub fn regression_stem(contrast: &str, target: Horizon) -> String {
    format!("regression_{contrast}_{}", target.key())
}

/// Previously published means for the three horizons, shown next to the
/// corpus values as a comparison point only.
pub const REFERENCE_MEANS: [(Horizon, f64); 3] = [(Horizon::H24, 121.1), (Horizon::H48, 188.7), (Horizon::D7, 288.5)];

pub fn event_curves_table(curves: Option<(&EventCurve, &EventCurve)>) -> Table {
    let mut t = Table::new(&["day", "mean", "median", "n_repos"]);
    if let Some((mean, median)) = curves {
        for (i, day) in mean.days.iter().enumerate() {
            t.push(vec![
                day.to_string(),
                fmt_stars(mean.values[i]),
                fmt_stars(median.values[i]),
                mean.n.to_string(),
            ]);
        }
    }
    t
}

pub fn launch_effects_table(effects: &[HorizonEffect]) -> Table {
    let mut t = Table::new(&["horizon", "mean", "median", "n", "reference_mean"]);
    for e in effects {
        let reference = REFERENCE_MEANS.iter().find(|(h, _)| *h == e.horizon).map(|r| r.1);
        t.push(vec![
            e.horizon.label().into(),
            fmt_stars(e.mean),
            fmt_stars(e.median),
            e.n.to_string(),
            fmt_opt(reference, fmt_stars),
        ]);
    }
    t
}

pub fn group_comparisons_table(comparisons: &[GroupComparison]) -> Table {
    let mut t = Table::new(&["grouping", "target", "group", "n", "mean", "difference", "best_group"]);
    for c in comparisons {
        for g in &c.groups {
            t.push(vec![
                c.grouping.key().into(),
                c.target.label().into(),
                g.label.into(),
                g.n.to_string(),
                fmt_opt(g.mean, fmt_stars),
                fmt_opt(c.difference, fmt_stars),
                c.best.unwrap_or_default().into(),
            ]);
        }
    }
    t
}

pub fn event_curve_figure(mean: &EventCurve, median: &EventCurve) -> FigureSpec {
    FigureSpec {
        kind: FigureKind::EventCurve,
        title: format!("Cumulative stars around launch (n = {})", mean.n),
        x_label: "day relative to launch".into(),
        y_label: "stars since window start".into(),
        categories: mean.days.iter().map(|d| d.to_string()).collect(),
        series: vec![
            Series {
                label: "mean".into(),
                values: mean.values.clone(),
            },
            Series {
                label: "median".into(),
                values: median.values.clone(),
            },
        ],
    }
}

/// Bars of per-bin mean gain; empty bins are drawn at zero height.
pub fn hour_figure(comparison: &GroupComparison) -> Result<FigureSpec> {
    if comparison.grouping != Grouping::HourBin {
        return Err(Error::invalid("hour figure needs an hour-bin comparison"));
    }
    Ok(FigureSpec {
        kind: FigureKind::HourBars,
        title: format!("Mean {} star gain by posting hour", comparison.target.label()),
        x_label: "posting hour (UTC)".into(),
        y_label: "mean stars gained".into(),
        categories: comparison.groups.iter().map(|g| g.label.to_string()).collect(),
        series: vec![Series {
            label: "mean".into(),
            values: comparison.groups.iter().map(|g| g.mean.unwrap_or(0.0)).collect(),
        }],
    })
}

/// Corpus accounting, shaped like a dataset description table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetStats {
    pub hn_posts: usize,
    pub github_posts: usize,
    pub total_pairs: usize,
    pub with_metadata: usize,
    pub valid_series: usize,
    pub feature_rows: usize,
    pub show_hn_rows: usize,
    pub excluded: Vec<(String, String)>,
    pub rejected: Vec<(String, String)>,
    pub first_post: Option<String>,
    pub last_post: Option<String>,
}

pub const STAT_TOTAL_PAIRS: &str = "Total pairs";
pub const STAT_VALID_SERIES: &str = "Valid series";
pub const STAT_SHOW_HN: &str = "Show HN posts";

pub fn dataset_stats_table(s: &DatasetStats) -> Table {
    let mut t = Table::new(&["statistic", "value"]);
    let rows: [(&str, String); 10] = [
        ("HN posts retrieved", s.hn_posts.to_string()),
        ("Posts linking GitHub", s.github_posts.to_string()),
        (STAT_TOTAL_PAIRS, s.total_pairs.to_string()),
        ("Repos with metadata", s.with_metadata.to_string()),
        (STAT_VALID_SERIES, s.valid_series.to_string()),
        ("Excluded series", s.excluded.len().to_string()),
        ("Feature rows", s.feature_rows.to_string()),
        (STAT_SHOW_HN, s.show_hn_rows.to_string()),
        ("First post", s.first_post.clone().unwrap_or_default()),
        ("Last post", s.last_post.clone().unwrap_or_default()),
    ];
    for (k, v) in rows {
        t.push(vec![k.into(), v]);
    }
    t
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ft = entry.file_type().map_err(|e| Error::io(&path, e))?;
        if ft.is_dir() {
            collect_files(&path, out)?;
        } else if ft.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Lists every file under `out/` (except the manifest itself) with its size.
pub fn build_manifest(layout: &OutLayout) -> Result<Table> {
    let mut files = Vec::new();
    collect_files(&layout.root, &mut files)?;
    let manifest = layout.manifest();
    let mut entries: Vec<(String, u64)> = files
        .into_iter()
        .filter(|p| *p != manifest)
        .map(|p| {
            let len = fs::metadata(&p).map_err(|e| Error::io(&p, e))?.len();
            Ok((relative(&layout.root, &p), len))
        })
        .collect::<Result<_>>()?;
    entries.sort();
    let mut t = Table::new(&["path", "bytes"]);
    for (p, n) in entries {
        t.push(vec![p, n.to_string()]);
    }
    Ok(t)
}

pub fn write_manifest(layout: &OutLayout) -> Result<Table> {
    let t = build_manifest(layout)?;
    t.write(&layout.manifest())?;
    Ok(t)
}

/// Fails naming every expected output that is absent from the manifest.
pub fn check_complete(layout: &OutLayout, manifest: &Table, expected: &[PathBuf]) -> Result<()> {
    let listed: Vec<&str> = manifest.rows.iter().map(|r| r[0].as_str()).collect();
    let missing: Vec<String> = expected
        .iter()
        .map(|p| relative(&layout.root, p))
        .filter(|p| !listed.contains(&p.as_str()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Verification(format!("missing outputs: {}", missing.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_files_sorted_with_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let layout = OutLayout::new(dir.path());
        Table::new(&["a"]).write(&layout.table("z_last")).unwrap();
        Table::new(&["bb"]).write(&layout.table("a_first")).unwrap();
        std::fs::write(layout.summary_report(), "hello").unwrap();
        let m = write_manifest(&layout).unwrap();
        let paths: Vec<&str> = m.rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(
            paths,
            vec!["summary_report.txt", "tables/a_first.csv", "tables/z_last.csv"]
        );
        assert_eq!(m.rows[1][1], "3");
        check_complete(&layout, &m, &[layout.table("a_first")]).unwrap();
        let err = check_complete(&layout, &m, &[layout.table(MODEL_PERFORMANCE)]).unwrap_err();
        assert!(err.to_string().contains("tables/model_performance.csv"));
        // idempotent: the manifest never lists itself
        assert_eq!(write_manifest(&layout).unwrap(), m);
    }

    #[test]
    fn empty_inputs_give_header_only_tables() {
        assert_eq!(event_curves_table(None).to_bytes(), b"day,mean,median,n_repos\n");
        assert_eq!(launch_effects_table(&[]).rows.len(), 0);
        assert_eq!(group_comparisons_table(&[]).rows.len(), 0);
    }
}

//! Event-relative alignment of star histories around the launch instant.
//!
//! Hour buckets are offsets from t0, not wall-clock hours: bucket `h` covers
//! `[t0 - 168h + h, t0 - 168h + h + 1h)`. Bucket 168 is the first post-launch
//! hour, and day `d` aggregates buckets `24d .. 24d + 24`.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RepoSlug, StarEventLog};

pub const PRE_HOURS: usize = 168;
pub const WINDOW_HOURS: usize = 2 * PRE_HOURS;
pub const WINDOW_DAYS: usize = WINDOW_HOURS / 24;
/// Index of the launch day (`[t0, t0 + 24h)`) in the daily series.
pub const LAUNCH_DAY: usize = PRE_HOURS / 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventWindow {
    pub t0: DateTime<Utc>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl EventWindow {
    /// Bucket index of `ts`, if it falls inside the half-open window.
    pub fn hour_index(&self, ts: DateTime<Utc>) -> Option<usize> {
        if ts < self.start || ts >= self.end {
            return None;
        }
        let ms = (ts - self.start).num_milliseconds();
        Some((ms / 3_600_000) as usize)
    }
}

pub fn build_window(t0: DateTime<Utc>) -> EventWindow {
    EventWindow {
        t0,
        start: t0 - Duration::hours(PRE_HOURS as i64),
        end: t0 + Duration::hours(PRE_HOURS as i64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Horizon {
    #[serde(rename = "d24")]
    H24,
    #[serde(rename = "d48")]
    H48,
    #[serde(rename = "d7")]
    D7,
}

impl Horizon {
    pub const ALL: [Horizon; 3] = [Horizon::H24, Horizon::H48, Horizon::D7];

    pub fn hours(self) -> usize {
        match self {
            Horizon::H24 => 24,
            Horizon::H48 => 48,
            Horizon::D7 => 168,
        }
    }

    /// Short name used in file names and column headers.
    pub fn key(self) -> &'static str {
        match self {
            Horizon::H24 => "d24",
            Horizon::H48 => "d48",
            Horizon::D7 => "d7",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Horizon::H24 => "24h",
            Horizon::H48 => "48h",
            Horizon::D7 => "7d",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Horizon::ALL
            .into_iter()
            .find(|h| h.key() == text || h.label() == text)
            .ok_or_else(|| Error::invalid(format!("unknown horizon {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSeries {
    pub slug: RepoSlug,
    #[serde(with = "crate::time::ts_format")]
    pub t0: DateTime<Utc>,
    pub hourly: Vec<u32>,
    pub daily: Vec<u32>,
    /// Stars strictly before t0.
    pub baseline_stars: u64,
}

impl AlignedSeries {
    pub fn delta(&self, horizon: Horizon) -> u64 {
        delta_stars(self, horizon)
    }

    /// Checks the structural invariants of a deserialized series.
    pub fn validate(&self) -> Result<()> {
        if self.hourly.len() != WINDOW_HOURS || self.daily.len() != WINDOW_DAYS {
            return Err(Error::invalid(format!(
                "{}: expected {WINDOW_HOURS} hourly and {WINDOW_DAYS} daily buckets",
                self.slug
            )));
        }
        if daily_totals(&self.hourly) != self.daily {
            return Err(Error::invalid(format!(
                "{}: daily totals disagree with hourly buckets",
                self.slug
            )));
        }
        Ok(())
    }
}

fn daily_totals(hourly: &[u32]) -> Vec<u32> {
    hourly.chunks(24).map(|day| day.iter().sum()).collect()
}

/// Buckets a sorted star log into the window. Events before t0 count toward
/// the baseline; events past the window end are ignored.
pub fn bucket_hourly(log: &StarEventLog, window: &EventWindow) -> Result<AlignedSeries> {
    if let Some(pos) = log.starred_at.windows(2).position(|w| w[0] > w[1]) {
        return Err(Error::invalid(format!(
            "{}: star log is not sorted (event {} precedes event {})",
            log.slug,
            pos + 1,
            pos
        )));
    }
    let mut hourly = vec![0u32; WINDOW_HOURS];
    let mut baseline_stars = 0u64;
    for &ts in &log.starred_at {
        if ts < window.t0 {
            baseline_stars += 1;
        }
        if let Some(h) = window.hour_index(ts) {
            hourly[h] += 1;
        }
    }
    let daily = daily_totals(&hourly);
    Ok(AlignedSeries {
        slug: log.slug.clone(),
        t0: window.t0,
        hourly,
        daily,
        baseline_stars,
    })
}

/// Stars gained in `[t0, t0 + horizon)`.
pub fn delta_stars(series: &AlignedSeries, horizon: Horizon) -> u64 {
    series.hourly[PRE_HOURS..PRE_HOURS + horizon.hours()]
        .iter()
        .map(|&c| c as u64)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlignOutcome {
    Series(AlignedSeries),
    Excluded { slug: RepoSlug, reason: String },
}

/// Aligns one repository, refusing incomplete histories.
pub fn align_log(log: &StarEventLog, t0: DateTime<Utc>) -> Result<AlignOutcome> {
    if !log.complete {
        return Ok(AlignOutcome::Excluded {
            slug: log.slug.clone(),
            reason: format!(
                "incomplete star history: {}",
                log.reason.as_deref().unwrap_or("unspecified")
            ),
        });
    }
    Ok(AlignOutcome::Series(bucket_hourly(log, &build_window(t0))?))
}

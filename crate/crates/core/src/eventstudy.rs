//! Launch-effect magnitudes, event-study curves and unadjusted group contrasts.

use crate::align::{AlignedSeries, Horizon, LAUNCH_DAY, WINDOW_DAYS};
use crate::error::{Error, Result};
use crate::features::{FeatureRow, HOUR_BIN_LABELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Median,
}

impl Statistic {
    pub fn key(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventCurve {
    pub statistic: Statistic,
    /// Event-relative day labels; 0 is `[t0, t0 + 24h)`.
    pub days: Vec<i32>,
    /// Cumulative stars since the window start, through the end of each day.
    pub values: Vec<f64>,
    pub n: usize,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Midpoint median: for even counts, the average of the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn cumulative_daily(series: &AlignedSeries) -> Vec<f64> {
    series
        .daily
        .iter()
        .scan(0u64, |acc, &d| {
            *acc += d as u64;
            Some(*acc as f64)
        })
        .collect()
}

pub fn event_curve(series: &[AlignedSeries], statistic: Statistic) -> Result<EventCurve> {
    if series.is_empty() {
        return Err(Error::invalid("event curve needs at least one aligned series"));
    }
    let per_repo: Vec<Vec<f64>> = series.iter().map(cumulative_daily).collect();
    let values = (0..WINDOW_DAYS)
        .map(|d| {
            let column: Vec<f64> = per_repo.iter().map(|c| c[d]).collect();
            match statistic {
                Statistic::Mean => mean(&column),
                Statistic::Median => median(&column),
            }
        })
        .collect();
    Ok(EventCurve {
        statistic,
        days: (0..WINDOW_DAYS as i32).map(|d| d - LAUNCH_DAY as i32).collect(),
        values,
        n: series.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonEffect {
    pub horizon: Horizon,
    pub mean: f64,
    pub median: f64,
    pub n: usize,
}

pub fn launch_effect_summary(rows: &[FeatureRow]) -> Result<Vec<HorizonEffect>> {
    if rows.is_empty() {
        return Err(Error::invalid("launch effect summary needs at least one row"));
    }
    Ok(Horizon::ALL
        .into_iter()
        .map(|h| {
            let values: Vec<f64> = rows.iter().map(|r| r.target(h) as f64).collect();
            HorizonEffect {
                horizon: h,
                mean: mean(&values),
                median: median(&values),
                n: rows.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    ShowHn,
    Weekend,
    HourBin,
}

impl Grouping {
    pub const ALL: [Grouping; 3] = [Grouping::ShowHn, Grouping::Weekend, Grouping::HourBin];

    pub fn key(self) -> &'static str {
        match self {
            Grouping::ShowHn => "show_hn",
            Grouping::Weekend => "weekend",
            Grouping::HourBin => "hour_bin",
        }
    }

    fn labels(self) -> Vec<&'static str> {
        match self {
            Grouping::ShowHn => vec!["non_show_hn", "show_hn"],
            Grouping::Weekend => vec!["weekday", "weekend"],
            Grouping::HourBin => HOUR_BIN_LABELS.to_vec(),
        }
    }

    fn group_of(self, row: &FeatureRow) -> usize {
        match self {
            Grouping::ShowHn => row.is_show_hn as usize,
            Grouping::Weekend => row.is_weekend as usize,
            Grouping::HourBin => row.hour_bin as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStat {
    pub label: &'static str,
    pub n: usize,
    /// Absent for empty groups.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupComparison {
    pub grouping: Grouping,
    pub target: Horizon,
    pub groups: Vec<GroupStat>,
    /// Binary groupings: group 1 minus group 0. Hour bins: best minus worst
    /// non-empty bin. Absent when fewer than two groups are populated.
    pub difference: Option<f64>,
    /// Hour bins only: label of the highest-mean bin.
    pub best: Option<&'static str>,
}

pub fn group_comparison(rows: &[FeatureRow], grouping: Grouping, target: Horizon) -> GroupComparison {
    let labels = grouping.labels();
    let mut sums = vec![0.0; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    for row in rows {
        let g = grouping.group_of(row);
        sums[g] += row.target(target) as f64;
        counts[g] += 1;
    }
    let groups: Vec<GroupStat> = labels
        .iter()
        .enumerate()
        .map(|(g, &label)| GroupStat {
            label,
            n: counts[g],
            mean: (counts[g] > 0).then(|| sums[g] / counts[g] as f64),
        })
        .collect();
    let (difference, best) = match grouping {
        Grouping::ShowHn | Grouping::Weekend => match (groups[0].mean, groups[1].mean) {
            (Some(a), Some(b)) => (Some(b - a), None),
            _ => (None, None),
        },
        Grouping::HourBin => {
            let present: Vec<&GroupStat> = groups.iter().filter(|g| g.mean.is_some()).collect();
            if present.len() < 2 {
                (None, None)
            } else {
                let hi = present
                    .iter()
                    .copied()
                    .reduce(|a, b| if b.mean > a.mean { b } else { a })
                    .expect("non-empty");
                let lo = present
                    .iter()
                    .copied()
                    .reduce(|a, b| if b.mean < a.mean { b } else { a })
                    .expect("non-empty");
                (Some(hi.mean.unwrap() - lo.mean.unwrap()), Some(hi.label))
            }
        }
    };
    GroupComparison {
        grouping,
        target,
        groups,
        difference,
        best,
    }
}

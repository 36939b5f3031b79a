//! Plain-text summaries. Every figure is copied from an emitted CSV cell so
//! the text can be checked against the tables.

use std::fmt::Write as _;

use super::table::Table;

pub struct SummaryInputs<'a> {
    pub dataset_stats: &'a Table,
    /// (slug, reason) for aligned series that were dropped.
    pub exclusions: &'a [(String, String)],
    /// (slug, reason) for feature rows that were rejected.
    pub rejections: &'a [(String, String)],
    pub launch_effects: &'a Table,
    pub group_comparisons: &'a Table,
    /// (table stem, regression table).
    pub regressions: &'a [(String, Table)],
    pub model_performance: &'a Table,
}

fn cell<'a>(t: &'a Table, row: &'a [String], name: &str) -> &'a str {
    t.get(row, name).unwrap_or("")
}

fn rule(out: &mut String, title: &str) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", "-".repeat(title.len()));
}

fn regressions_section(out: &mut String, regressions: &[(String, Table)]) {
    if regressions.is_empty() {
        let _ = writeln!(out, "(no regressions)");
        return;
    }
    for (stem, t) in regressions {
        let _ = writeln!(out, "{stem}");
        let _ = writeln!(
            out,
            "  {:<18} {:>12} {:>12} {:>8}  note",
            "effect", "coefficient", "std_error", "p_value"
        );
        for row in &t.rows {
            let _ = writeln!(
                out,
                "  {:<18} {:>12} {:>12} {:>8}  {}",
                cell(t, row, "effect"),
                cell(t, row, "coefficient"),
                cell(t, row, "std_error"),
                cell(t, row, "p_value"),
                cell(t, row, "note")
            );
        }
    }
}

pub fn render_inference(regressions: &[(String, Table)]) -> String {
    let mut out = String::new();
    rule(&mut out, "Adjusted contrasts (OLS, HC1 robust standard errors)");
    regressions_section(&mut out, regressions);
    out
}

pub fn render_report(s: &SummaryInputs) -> String {
    let mut out = String::new();
    rule(&mut out, "Dataset");
    for row in &s.dataset_stats.rows {
        let _ = writeln!(
            out,
            "{:<24} {}",
            cell(s.dataset_stats, row, "statistic"),
            cell(s.dataset_stats, row, "value")
        );
    }
    if s.exclusions.is_empty() && s.rejections.is_empty() {
        let _ = writeln!(out, "Exclusions: none");
    }
    for (slug, reason) in s.exclusions {
        let _ = writeln!(out, "Excluded series: {slug} ({reason})");
    }
    for (slug, reason) in s.rejections {
        let _ = writeln!(out, "Rejected row: {slug} ({reason})");
    }

    out.push('\n');
    rule(&mut out, "Launch effects (stars gained after posting)");
    let t = s.launch_effects;
    for row in &t.rows {
        let reference = cell(t, row, "reference_mean");
        let _ = writeln!(
            out,
            "{:<4} mean {:>8}  median {:>8}  n {}{}",
            cell(t, row, "horizon"),
            cell(t, row, "mean"),
            cell(t, row, "median"),
            cell(t, row, "n"),
            if reference.is_empty() {
                String::new()
            } else {
                format!("  (reference mean {reference})")
            }
        );
    }

    out.push('\n');
    rule(&mut out, "Unadjusted group comparisons");
    let t = s.group_comparisons;
    let mut last_key = String::new();
    for row in &t.rows {
        let key = format!("{} {}", cell(t, row, "grouping"), cell(t, row, "target"));
        if key != last_key {
            let diff = cell(t, row, "difference");
            let best = cell(t, row, "best_group");
            let _ = writeln!(
                out,
                "{key}: difference {}{}",
                if diff.is_empty() { "n/a" } else { diff },
                if best.is_empty() {
                    String::new()
                } else {
                    format!(" (best {best})")
                }
            );
            last_key = key;
        }
        let mean = cell(t, row, "mean");
        let _ = writeln!(
            out,
            "  {:<12} n {:>4}  mean {}",
            cell(t, row, "group"),
            cell(t, row, "n"),
            if mean.is_empty() { "absent" } else { mean }
        );
    }

    out.push('\n');
    out.push_str(&render_inference(s.regressions));

    out.push('\n');
    rule(&mut out, "Predictive models (held-out test split)");
    let t = s.model_performance;
    let _ = writeln!(
        out,
        "{:<18} {:<7} {:<16} {:>9} {:>9} {:>7} {:>6}",
        "model", "target", "feature_set", "MAE", "RMSE", "R2", "test_n"
    );
    for row in &t.rows {
        let leaky = cell(t, row, "leaky") == "true";
        let _ = writeln!(
            out,
            "{:<18} {:<7} {:<16} {:>9} {:>9} {:>7} {:>6}{}",
            cell(t, row, "model"),
            cell(t, row, "target"),
            cell(t, row, "feature_set"),
            cell(t, row, "mae"),
            cell(t, row, "rmse"),
            match cell(t, row, "r2") {
                "" => "n/a",
                v => v,
            },
            cell(t, row, "test_n"),
            if leaky { "  [leaky]" } else { "" }
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{dataset_stats_table, DatasetStats};

    #[test]
    fn exclusion_and_table_one_lines() {
        let stats = DatasetStats {
            total_pairs: 3,
            valid_series: 2,
            show_hn_rows: 1,
            excluded: vec![("a/b".into(), "restricted".into())],
            ..Default::default()
        };
        let ds = dataset_stats_table(&stats);
        let empty = Table::new(&["x"]);
        let text = render_report(&SummaryInputs {
            dataset_stats: &ds,
            exclusions: &stats.excluded,
            rejections: &[],
            launch_effects: &empty,
            group_comparisons: &empty,
            regressions: &[],
            model_performance: &empty,
        });
        assert!(text.contains("Total pairs"));
        assert!(text.contains("Valid series             2"));
        assert!(text.contains("Show HN posts"));
        assert!(text.contains("Excluded series: a/b (restricted)"));
    }
}

//! Hand-written SVG for the two report figures. Output depends only on the
//! input numbers, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::write_atomic;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const Y_TICKS: usize = 5;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// One polyline per series over ordered x categories, with a vertical
    /// marker at the category labeled "0".
    EventCurve,
    /// One bar per category from the first series.
    HourBars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub categories: Vec<String>,
    pub series: Vec<Series>,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Coordinates with two decimals and no negative zero.
fn num(v: f64) -> String {
    crate::report::table::fmt_fixed(v, 2)
}

fn validate(fig: &FigureSpec) -> Result<()> {
    if fig.categories.is_empty() || fig.series.is_empty() {
        return Err(Error::invalid(format!("figure {:?} has no data", fig.title)));
    }
    for s in &fig.series {
        if s.values.len() != fig.categories.len() {
            return Err(Error::invalid(format!(
                "series {:?} has {} points for {} categories",
                s.label,
                s.values.len(),
                fig.categories.len()
            )));
        }
        if let Some(i) = s.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series {:?} at point {i}", s.label)));
        }
    }
    Ok(())
}

struct Frame {
    y_min: f64,
    y_max: f64,
    n: usize,
    bars: bool,
}

impl Frame {
    fn plot_w() -> f64 {
        WIDTH - LEFT - RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - TOP - BOTTOM
    }

    fn x(&self, i: usize) -> f64 {
        if self.bars {
            LEFT + Self::plot_w() * (i as f64 + 0.5) / self.n as f64
        } else if self.n == 1 {
            LEFT + Self::plot_w() / 2.0
        } else {
            LEFT + Self::plot_w() * i as f64 / (self.n - 1) as f64
        }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + Self::plot_h() * (self.y_max - v) / (self.y_max - self.y_min)
    }
}

fn frame(fig: &FigureSpec) -> Frame {
    let all = fig.series.iter().flat_map(|s| s.values.iter().copied());
    let (lo, hi) = all.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let hi = if hi > lo { hi } else { lo + 1.0 };
    Frame {
        y_min: lo,
        y_max: hi,
        n: fig.categories.len(),
        bars: fig.kind == FigureKind::HourBars,
    }
}

pub fn render_svg(fig: &FigureSpec) -> Result<String> {
    validate(fig)?;
    let f = frame(fig);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        num(WIDTH / 2.0),
        escape(&fig.title)
    );

    // axes and gridlines
    let bottom = TOP + Frame::plot_h();
    for t in 0..=Y_TICKS {
        let v = f.y_min + (f.y_max - f.y_min) * t as f64 / Y_TICKS as f64;
        let y = num(f.y(v));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#e0e0e0"/>"##,
            num(WIDTH - RIGHT)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            num(LEFT - 6.0),
            crate::report::table::fmt_fixed(v, 1)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        num(bottom)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{b}" x2="{}" y2="{b}" stroke="black"/>"#,
        num(WIDTH - RIGHT),
        b = num(bottom)
    );
    for (i, c) in fig.categories.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(f.x(i)),
            num(bottom + 18.0),
            escape(c)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(LEFT + Frame::plot_w() / 2.0),
        num(HEIGHT - 12.0),
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(&fig.y_label),
        y = num(TOP + Frame::plot_h() / 2.0)
    );

    match fig.kind {
        FigureKind::EventCurve => {
            if let Some(zero) = fig.categories.iter().position(|c| c == "0") {
                let x = num(f.x(zero));
                let _ = writeln!(
                    s,
                    r##"<line class="launch-marker" x1="{x}" y1="{TOP}" x2="{x}" y2="{}" stroke="#555555" stroke-dasharray="4 3"/>"##,
                    num(bottom)
                );
            }
            for (k, series) in fig.series.iter().enumerate() {
                let points: Vec<String> = series
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| format!("{},{}", num(f.x(i)), num(f.y(v))))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline data-series="{}" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                    escape(&series.label),
                    points.join(" "),
                    COLORS[k % COLORS.len()]
                );
            }
            for (k, series) in fig.series.iter().enumerate() {
                let y = TOP + 8.0 + 16.0 * k as f64;
                let _ = writeln!(
                    s,
                    r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/><text x="{}" y="{y}" dominant-baseline="middle">{}</text>"#,
                    num(LEFT + 12.0),
                    num(LEFT + 32.0),
                    num(LEFT + 38.0),
                    escape(&series.label),
                    c = COLORS[k % COLORS.len()],
                    y = num(y)
                );
            }
        }
        FigureKind::HourBars => {
            let series = &fig.series[0];
            let slot = Frame::plot_w() / f.n as f64;
            let base = f.y(0.0);
            for (i, &v) in series.values.iter().enumerate() {
                let top = f.y(v);
                let (y, h) = if top <= base {
                    (top, base - top)
                } else {
                    (base, top - base)
                };
                let _ = writeln!(
                    s,
                    r#"<rect data-label="{}" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                    escape(&fig.categories[i]),
                    num(f.x(i) - slot * 0.35),
                    num(y),
                    num(slot * 0.7),
                    num(h),
                    COLORS[0]
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(fig: &FigureSpec, path: &Path) -> Result<()> {
    write_atomic(path, render_svg(fig)?.as_bytes())
}

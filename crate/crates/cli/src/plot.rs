//! `plot`: line charts from CSV logs as standalone SVG.
//!
//! Each requested column becomes one series: the pointwise median across
//! the input files drawn as a line over a shaded min-max band.

use crate::csvlog::Table;
use crate::error::{CliError, Result};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub median: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Aggregates `column` across tables, truncated to the shortest table. The
/// x axis is the `epoch` column of the first table, or the row index.
pub fn series(tables: &[Table], column: &str) -> Result<Series> {
    let first = tables.first().ok_or_else(|| CliError::Config("plot needs at least one CSV".into()))?;
    let cols: Vec<Vec<f64>> = tables.iter().map(|t| t.column(column)).collect::<Result<_>>()?;
    let len = cols.iter().map(Vec::len).min().unwrap_or(0);
    let x = match first.column("epoch") {
        Ok(e) => e[..len].to_vec(),
        Err(_) => (0..len).map(|i| i as f64).collect(),
    };
    let mut s = Series {
        name: column.to_string(),
        x,
        median: Vec::with_capacity(len),
        min: Vec::with_capacity(len),
        max: Vec::with_capacity(len),
    };
    for i in 0..len {
        let pts: Vec<f64> = cols.iter().map(|c| c[i]).collect();
        s.median.push(crate::sweep::median(&pts));
        s.min.push(pts.iter().copied().fold(f64::INFINITY, f64::min));
        s.max.push(pts.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

pub fn render(series: &[Series], title: &str) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = extent(series.iter().flat_map(|s| s.min.iter().chain(&s.max).copied()));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        TOP / 2.0 + 5.0,
        escape(title)
    );
    let _ = writeln!(out, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/>"#, TOP + ph);
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}"/>"#, px(xv), TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(out, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/>"#, LEFT - 5.0, py(yv), LEFT);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g class="tick-labels">"#);
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            px(xv),
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py(yv) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let ylabel: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&ylabel.join(", "))
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = |ys: &[f64]| -> Vec<String> {
            s.x.iter()
                .zip(ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                .collect()
        };
        let mut band = pts(&s.max);
        band.extend(pts(&s.min).into_iter().rev());
        let _ = writeln!(out, r#"<g class="series" id="series-{i}">"#);
        if !band.is_empty() {
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts(&s.median).join(" ")
        );
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = LEFT + pw + 15.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="14" height="10" fill="{color}" fill-opacity="0.5" stroke="{color}"/>"#,
            y - 9.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 20.0, escape(&s.name));
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Reads every CSV, checks every column exists in each, writes the chart.
pub fn plot(csvs: &[&Path], columns: &[String], out: &Path, title: Option<&str>) -> Result<()> {
    if csvs.is_empty() || columns.is_empty() {
        return Err(CliError::Config("plot needs at least one CSV and one column".into()));
    }
    let tables: Vec<Table> = csvs.iter().map(|p| Table::read(p)).collect::<Result<_>>()?;
    let series: Vec<Series> = columns.iter().map(|c| series(&tables, c)).collect::<Result<_>>()?;
    let title = title.map(str::to_string).unwrap_or_else(|| columns.join(", "));
    std::fs::write(out, render(&series, &title)).map_err(|e| CliError::io(out, e))
}

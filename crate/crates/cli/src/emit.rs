//! CSV, JSON and SVG output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use impact_game_core::{BoxStats, SimulationSummary};
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::runner::PointResult;
use crate::scenario::Scenario;

pub const CSV_HEADER: &str = "t,trader,mean,median,q1,q3,whisker_lo,whisker_hi,total_volume";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// One row per `(t, trader)`, traders numbered 1 and 2, with `TV_t` repeated
/// on both rows of a period.
pub fn csv_string(summary: &SimulationSummary) -> String {
    let mut out = String::with_capacity(64 * (summary.horizon() * 2 + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (k, (row, tv)) in summary.volumes.iter().zip(&summary.total_volume).enumerate() {
        for (i, s) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                k + 1,
                i + 1,
                s.mean,
                s.median,
                s.q1,
                s.q3,
                s.whisker_lo,
                s.whisker_hi,
                tv
            );
        }
    }
    out
}

/// Scenario name with anything unsafe in a file name replaced by `_`.
fn base_name(scenario: &Scenario) -> String {
    scenario
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// File stem of grid point `index` (0-based).
pub fn stem(scenario: &Scenario, index: usize) -> String {
    format!("{}_{:02}", base_name(scenario), index + 1)
}

/// Everything needed to reproduce and interpret a run. `config` re-loads to
/// the scenario that was run.
pub fn manifest(scenario: &Scenario, results: &[PointResult]) -> Value {
    let points: Vec<Value> = results
        .iter()
        .map(|r| {
            let p = &r.point;
            let overrides: Map<String, Value> = p.overrides.iter().cloned().collect();
            json!({
                "index": p.index + 1,
                "label": p.label(),
                "file_stem": stem(scenario, p.index),
                "overrides": overrides,
                "market": p.params,
                "environment": p.env,
                "traders": p.traders,
                "simulation": p.simulation,
                "policy": r.solution.policy,
                "summary": r.summary,
            })
        })
        .collect();
    json!({
        "generator": "impact-game",
        "version": env!("CARGO_PKG_VERSION"),
        "name": scenario.name,
        "seed": scenario.simulation.seed,
        "config": serde_json::to_value(scenario.to_document()).expect("documents always serialise"),
        "points": points,
    })
}

/// Writes the requested artifacts plus the `<name>.json` manifest into
/// `out_dir`, returning the paths written.
pub fn emit(
    scenario: &Scenario,
    results: &[PointResult],
    format: Format,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    if results.is_empty() {
        return Err(CliError::Invalid {
            context: scenario.name.clone(),
            message: "nothing to write".to_string(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, body: &str| -> Result<(), CliError> {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for r in results {
        let stem = stem(scenario, r.point.index);
        match format {
            Format::Csv => write(format!("{stem}.csv"), &csv_string(&r.summary))?,
            Format::Svg => {
                let title = format!("{}: {}", scenario.name, r.point.label());
                write(format!("{stem}.svg"), &svg_string(&title, &r.summary))?
            }
            Format::Json => {}
        }
    }
    let mut body = serde_json::to_string_pretty(&manifest(scenario, results)).expect("manifest serialises");
    body.push('\n');
    write(format!("{}.json", base_name(scenario)), &body)?;
    Ok(written)
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

/// Mean volume per trader over time, with a box-and-whisker glyph per period.
pub fn svg_string(title: &str, summary: &SimulationSummary) -> String {
    let horizon = summary.horizon().max(1);
    let stats = summary.volumes.iter().flatten();
    let (mut lo, mut hi) = stats.fold((0.0f64, 0.0f64), |(lo, hi), s| {
        (lo.min(s.whisker_lo).min(s.mean), hi.max(s.whisker_hi).max(s.mean))
    });
    if hi - lo <= 0.0 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: usize| LEFT + (t as f64 - 0.5) / horizon as f64 * plot_w;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
    let slot = plot_w / horizon as f64;
    let box_w = 0.25 * slot;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // axes and grid
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.0}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        y(0.0),
        LEFT + plot_w
    );
    for t in 1..=summary.horizon() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#,
            x(t),
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );

    for (i, color) in COLORS.iter().enumerate() {
        let shift = if i == 0 { -0.6 * box_w } else { 0.6 * box_w };
        for (k, row) in summary.volumes.iter().enumerate() {
            glyph(&mut s, &row[i], x(k + 1) + shift, box_w, &y, color);
        }
        let points: Vec<String> = summary
            .volumes
            .iter()
            .enumerate()
            .map(|(k, row)| format!("{:.2},{:.2}", x(k + 1), y(row[i].mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            LEFT + 10.0,
            LEFT + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">trader {} mean volume</text>"#,
            LEFT + 36.0,
            ly + 4.0,
            i + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

fn glyph(s: &mut String, b: &BoxStats, cx: f64, w: f64, y: &impl Fn(f64) -> f64, color: &str) {
    let (l, r) = (cx - w / 2.0, cx + w / 2.0);
    let _ = writeln!(
        s,
        r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
        y(b.whisker_hi),
        y(b.whisker_lo)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{l:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="white" fill-opacity="0.6" stroke="{color}"/>"#,
        y(b.q3),
        y(b.q1) - y(b.q3)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{l:.2}" y1="{0:.2}" x2="{r:.2}" y2="{0:.2}" stroke="{color}" stroke-width="2"/>"#,
        y(b.median)
    );
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

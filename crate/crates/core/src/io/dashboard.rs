//! SVG dashboard: one panel per latent curve with its 95% band, plus an
//! HTML page that lays the panels out in a grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GppmError, Result};
use crate::predict::CurveSummary;

/// A shaded range of calendar days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventShade {
    pub start: u32,
    pub end: u32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardSpec {
    pub panels: Vec<CurveSummary>,
    #[serde(default)]
    pub events: Vec<EventShade>,
}

const WIDTH: f64 = 420.0;
const HEIGHT: f64 = 240.0;
const LEFT: f64 = 48.0;
const RIGHT: f64 = 12.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 36.0;

fn title(name: &str) -> String {
    match name {
        "long_run" => "Calendar, long run".into(),
        "short_run" => "Calendar, short run".into(),
        "cyclic" => "Calendar, weekly".into(),
        "recency" => "Recency".into(),
        "lifetime" => "Lifetime".into(),
        "purchase_number" => "Purchase number".into(),
        other => other.replace('_', " "),
    }
}

fn axis_label(name: &str) -> &'static str {
    match name {
        "recency" => "days since last spend",
        "lifetime" => "days since first spend",
        "cyclic" => "day of week",
        "purchase_number" => "purchase number",
        _ => "day",
    }
}

fn is_calendar(name: &str) -> bool {
    matches!(name, "long_run" | "short_run")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Checks that every band encloses its median.
pub fn check_panel(c: &CurveSummary) -> Result<()> {
    let n = c.grid.len();
    if n == 0 || c.median.len() != n || c.lower.len() != n || c.upper.len() != n {
        return Err(GppmError::InvalidInput(format!(
            "panel {}: inconsistent lengths",
            c.name
        )));
    }
    for j in 0..n {
        let (l, m, u) = (c.lower[j], c.median[j], c.upper[j]);
        if !(l.is_finite() && m.is_finite() && u.is_finite() && l <= m && m <= u) {
            return Err(GppmError::InvalidInput(format!(
                "panel {}: band [{l}, {u}] does not enclose median {m} at {}",
                c.name, c.grid[j]
            )));
        }
    }
    Ok(())
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-9 * span {
        out.push(if v.abs() < 1e-12 * span { 0.0 } else { v });
        v += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// One panel as a standalone SVG document. Event shading is drawn only on
/// calendar-time panels.
pub fn render_panel(c: &CurveSummary, events: &[EventShade]) -> Result<String> {
    check_panel(c)?;
    let x0 = c.grid[0];
    let mut x1 = *c.grid.last().unwrap();
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let lo = c.lower.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-3);
    let s = Scale {
        x0,
        x1,
        y0: lo - pad,
        y1: hi + pad,
    };
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        w,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        w,
        r#"<text x="{}" y="16" font-size="12" font-weight="bold">{}</text>"#,
        LEFT,
        escape(&title(&c.name))
    );
    if is_calendar(&c.name) {
        for e in events {
            let a = s.x((e.start as f64 - 0.5).max(x0));
            let b = s.x((e.end as f64 + 0.5).min(x1));
            if b <= a {
                continue;
            }
            let _ = writeln!(
                w,
                r##"<rect class="event" x="{a:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="#f4d58d" fill-opacity="0.5"><title>{}</title></rect>"##,
                b - a,
                HEIGHT - TOP - BOTTOM,
                escape(&e.label)
            );
        }
    }
    // axes
    let (ax0, ax1) = (LEFT, WIDTH - RIGHT);
    let (ay0, ay1) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        w,
        r##"<line x1="{ax0:.2}" y1="{ay1:.2}" x2="{ax1:.2}" y2="{ay1:.2}" stroke="#333"/>"##
    );
    let _ = writeln!(
        w,
        r##"<line x1="{ax0:.2}" y1="{ay0:.2}" x2="{ax0:.2}" y2="{ay1:.2}" stroke="#333"/>"##
    );
    for t in ticks(x0, x1) {
        let x = s.x(t);
        let _ = writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{ay1:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
            ay1 + 4.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            ay1 + 14.0,
            fmt_tick(t)
        );
    }
    for t in ticks(s.y0, s.y1) {
        let y = s.y(t);
        let _ = writeln!(
            w,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{ax0:.2}" y2="{y:.2}" stroke="#333"/>"##,
            ax0 - 4.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ax0 - 6.0,
            y + 3.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (ax0 + ax1) / 2.0,
        HEIGHT - 6.0,
        axis_label(&c.name)
    );
    // band
    let mut pts: Vec<String> = c
        .grid
        .iter()
        .zip(&c.upper)
        .map(|(g, u)| format!("{:.2},{:.2}", s.x(*g), s.y(*u)))
        .collect();
    pts.extend(
        c.grid
            .iter()
            .zip(&c.lower)
            .rev()
            .map(|(g, l)| format!("{:.2},{:.2}", s.x(*g), s.y(*l))),
    );
    let _ = writeln!(
        w,
        r##"<polygon class="band" points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##,
        pts.join(" ")
    );
    let line: Vec<String> = c
        .grid
        .iter()
        .zip(&c.median)
        .map(|(g, m)| format!("{:.2},{:.2}", s.x(*g), s.y(*m)))
        .collect();
    let _ = writeln!(
        w,
        r##"<polyline class="median" points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##,
        line.join(" ")
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes `<name>.svg` for every panel and `dashboard.html` embedding them
/// all. Returns the written paths, HTML last.
pub fn render_dashboard(spec: &DashboardSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    let mut html = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Spend propensity dashboard</title>\n\
         <style>body{font-family:sans-serif} .grid{display:grid;grid-template-columns:repeat(3,420px);gap:12px}</style>\n\
         </head>\n<body>\n<h1>Spend propensity dashboard</h1>\n<div class=\"grid\">\n",
    );
    for c in &spec.panels {
        let svg = render_panel(c, &spec.events)?;
        let p = out_dir.join(format!("{}.svg", c.name));
        std::fs::write(&p, &svg)?;
        paths.push(p);
        let _ = writeln!(html, "<div class=\"panel\">\n{svg}</div>");
    }
    html.push_str("</div>\n</body>\n</html>\n");
    let p = out_dir.join("dashboard.html");
    std::fs::write(&p, html)?;
    paths.push(p);
    Ok(paths)
}

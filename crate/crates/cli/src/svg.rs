//! Minimal deterministic SVG line charts.
//!
//! Coordinates are printed with fixed precision and nothing depends on time
//! or hashing order, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 320.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#555555"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Solid,
    Dotted,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
    /// Index into the palette.
    pub color: usize,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: Style, color: usize) -> Self {
        Self { label: label.into(), points, style, color }
    }
}

#[derive(Debug, Clone)]
pub struct Annotation {
    pub x: f64,
    pub y: f64,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub annotations: Vec<Annotation>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Default::default() }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round step of the form {1, 2, 5}·10^k near `span/target`.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.5 {
        2.0
    } else if frac < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1e-300) {
            let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
            (lo, hi) = (lo - pad, hi + pad);
        }
        let step = nice_step(hi - lo, 5.0);
        Self { lo: (lo / step).floor() * step, hi: (hi / step).ceil() * step, step }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }

    fn label(&self, v: f64) -> String {
        let decimals = (-self.step.log10().floor()).max(0.0) as usize;
        let s = format!("{:.*}", decimals, v);
        // Avoid "-0" and "-0.00".
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    }
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (top + MARGIN_TOP, top + PANEL_HEIGHT - MARGIN_BOTTOM);
    let pts = || panel.series.iter().flat_map(|s| s.points.iter());
    let ax = Axis::fit(pts().map(|p| p.0));
    let ay = Axis::fit(pts().map(|p| p.1));
    let sx = |x: f64| x0 + (x - ax.lo) / (ax.hi - ax.lo) * (x1 - x0);
    let sy = |y: f64| y1 - (y - ay.lo) / (ay.hi - ay.lo) * (y1 - y0);

    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="15">{}</text>"#, 0.5 * (x0 + x1), top + 22.0, escape(&panel.title));
    let _ = writeln!(out, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##, x1 - x0, y1 - y0);
    for t in ax.ticks() {
        let x = sx(t);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##, y1 + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#, y1 + 18.0, ax.label(t));
    }
    for t in ay.ticks() {
        let y = sy(t);
        let _ = writeln!(out, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#000"/>"##, x0 - 5.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#, x0 - 8.0, y + 4.0, ay.label(t));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#, 0.5 * (x0 + x1), y1 + 38.0, escape(&panel.x_label));
    let (lx, ly) = (18.0, 0.5 * (y0 + y1));
    let _ = writeln!(out, r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#, escape(&panel.y_label));

    for s in &panel.series {
        let color = PALETTE[s.color % PALETTE.len()];
        let dash = match s.style {
            Style::Solid => "",
            Style::Dotted => r#" stroke-dasharray="2 3""#,
        };
        // Non-finite values split the line.
        for run in s.points.split(|p| !(p.0.is_finite() && p.1.is_finite())).filter(|r| !r.is_empty()) {
            let coords: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, coords.join(" "));
        }
    }
    for (i, s) in panel.series.iter().enumerate() {
        let color = PALETTE[s.color % PALETTE.len()];
        let y = y0 + 16.0 + 16.0 * i as f64;
        let dash = if s.style == Style::Dotted { r#" stroke-dasharray="2 3""# } else { "" };
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#, x1 - 150.0, x1 - 126.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#, x1 - 120.0, y + 4.0, escape(&s.label));
    }
    for a in &panel.annotations {
        let (x, y) = (sx(a.x), sy(a.y));
        let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="none" stroke="#000"/>"##);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#, x + 6.0, y - 6.0, escape(&a.text));
    }
}

/// Panels stacked vertically in one document.
pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#fff"/>"##);
    if panels.is_empty() {
        render_panel(&mut out, &Panel::default(), 0.0);
    }
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}

pub fn write(path: &Path, panels: &[Panel]) -> std::io::Result<()> {
    std::fs::write(path, render(panels))
}

//! Minimal self-contained SVG plots. Output depends only on the input data.

use std::fmt::Write;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ViolinGroup {
    pub label: String,
    pub samples: Vec<f64>,
    /// Theory marker drawn as a dot.
    pub marker: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LineSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Clone, Debug)]
pub enum PlotTable {
    Violin { title: String, y_label: String, groups: Vec<ViolinGroup> },
    Line { title: String, x_label: String, y_label: String, log_x: bool, log_y: bool, series: Vec<LineSeries> },
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            return (a..=b).map(|e| 10f64.powi(e)).collect();
        }
        let span = self.hi - self.lo;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let start = (self.lo / step).ceil() as i64;
        let end = (self.hi / step).floor() as i64;
        (start..=end).map(|i| i as f64 * step).collect()
    }
}

fn px(ax: &Axis, v: f64) -> f64 {
    LEFT + ax.frac(v) * (W - LEFT - RIGHT)
}

fn py(ax: &Axis, v: f64) -> f64 {
    H - BOTTOM - ax.frac(v) * (H - TOP - BOTTOM)
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn y_axis(out: &mut String, ay: &Axis, label: &str) {
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    for t in ay.ticks() {
        let y = py(ay, t);
        let _ = writeln!(out, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_num(t));
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(label)
    );
}

/// Render a table as an SVG document.
pub fn emit_svg(table: &PlotTable) -> Result<String> {
    match table {
        PlotTable::Violin { title, y_label, groups } => violin(title, y_label, groups),
        PlotTable::Line { title, x_label, y_label, log_x, log_y, series } => {
            line(title, x_label, y_label, *log_x, *log_y, series)
        }
    }
}

fn violin(title: &str, y_label: &str, groups: &[ViolinGroup]) -> Result<String> {
    if groups.is_empty() || groups.iter().all(|g| g.samples.is_empty()) {
        return Err(Error::EmptyTable);
    }
    let ay = Axis::new(groups.iter().flat_map(|g| g.samples.iter().copied().chain(g.marker)), false);
    let mut out = String::new();
    header(&mut out, title);
    y_axis(&mut out, &ay, y_label);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - BOTTOM, W - RIGHT, H - BOTTOM);
    let slot = (W - LEFT - RIGHT) / groups.len() as f64;
    let half = 0.4 * slot;
    for (i, g) in groups.iter().enumerate() {
        let cx = LEFT + (i as f64 + 0.5) * slot;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<g class="violin">"#);
        if !g.samples.is_empty() {
            let shape = kde_outline(&g.samples, 48);
            let peak = shape.iter().map(|p| p.1).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut d = String::new();
            for (k, (v, dens)) in shape.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, cx + half * dens / peak, py(&ay, *v));
            }
            for (v, dens) in shape.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", cx - half * dens / peak, py(&ay, *v));
            }
            let _ = writeln!(out, r#"<path d="{}Z" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#, d);
            let mean = g.samples.iter().sum::<f64>() / g.samples.len() as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                cx - 0.3 * half,
                py(&ay, mean),
                cx + 0.3 * half,
                py(&ay, mean)
            );
        }
        if let Some(m) = g.marker {
            let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{:.2}" r="4" fill="blue"/>"#, py(&ay, m));
        }
        let _ = writeln!(out, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, escape(&g.label));
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Gaussian KDE on a grid spanning the sample range (Silverman bandwidth).
fn kde_outline(samples: &[f64], steps: usize) -> Vec<(f64, f64)> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(2.0)).sqrt();
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bw = (1.06 * sd * n.powf(-0.2)).max(1e-6 * (1.0 + mean.abs()));
    (0..=steps)
        .map(|k| {
            let v = if hi > lo { lo + (hi - lo) * k as f64 / steps as f64 } else { lo };
            let dens = samples.iter().map(|s| (-0.5 * ((v - s) / bw).powi(2)).exp()).sum::<f64>();
            (v, dens)
        })
        .collect()
}

fn line(title: &str, x_label: &str, y_label: &str, log_x: bool, log_y: bool, series: &[LineSeries]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptyTable);
    }
    let ax = Axis::new(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), log_x);
    let ay = Axis::new(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), log_y);
    let mut out = String::new();
    header(&mut out, title);
    y_axis(&mut out, &ay, y_label);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - BOTTOM, W - RIGHT, H - BOTTOM);
    for t in ax.ticks() {
        let x = px(&ax, t);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, fmt_num(t));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(&ax, x), py(&ay, y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#, pts.join(" "));
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 8.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 126.0,
            W - RIGHT - 120.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

//! Deterministic SVG plots. Output depends only on the dataset: fixed
//! sizes, fixed palette, coordinates printed with two decimals and no
//! timestamps or ids derived from the environment.

use std::fmt::Write;

use peakonlab::curve_flows::AtomKind;
use peakonlab::phase_plane::{CriticalKind, CriticalPoint, ModelParams};

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct LevelCurve {
    pub h: f64,
    /// Polylines in `(φ, v)`.
    pub paths: Vec<Vec<(f64, f64)>>,
}

pub struct PhaseData {
    pub params: ModelParams,
    pub levels: Vec<LevelCurve>,
    pub critical: Vec<CriticalPoint>,
    pub phi_max: f64,
    pub v_max: f64,
}

pub struct CurveData {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index and kind of every atom.
    pub markers: Vec<(usize, AtomKind)>,
    pub closed: bool,
}

pub struct SeriesData {
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Vec<(f64, f64)>>,
    pub points: Vec<(f64, f64)>,
}

pub enum Dataset {
    Empty,
    Phase(PhaseData),
    Curve(CurveData),
    Series(SeriesData),
}

#[derive(Debug, Clone)]
pub struct Style {
    pub title: String,
    pub width: f64,
    pub height: f64,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            title: String::new(),
            width: 640.0,
            height: 520.0,
        }
    }
}

const MARGIN: f64 = 56.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * self.w
    }
    fn py(&self, y: f64) -> f64 {
        MARGIN + (self.y1 - y) / (self.y1 - self.y0) * self.h
    }
}

fn c2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn tick_label(x: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{x:.digits$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

fn path_d(f: &Frame, pts: &[(f64, f64)]) -> String {
    let mut d = String::new();
    let mut pen = false;
    for &(x, y) in pts {
        if !(x.is_finite() && y.is_finite()) {
            pen = false;
            continue;
        }
        let _ = write!(d, "{}{} {}", if pen { " L" } else if d.is_empty() { "M" } else { " M" }, c2(f.px(x)), c2(f.py(y)));
        pen = true;
    }
    d
}

fn header(out: &mut String, style: &Style) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = style.width,
        h = style.height
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(out, r#"<defs><clipPath id="plot-area"><rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}"/></clipPath></defs>"#, style.width - 2.0 * MARGIN, style.height - 2.0 * MARGIN);
    if !style.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="28" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            c2(style.width / 2.0),
            escape(&style.title)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r##"<rect class="axes" x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#000000" stroke-width="1"/>"##,
        c2(f.w),
        c2(f.h)
    );
    let font = r#"font-family="sans-serif" font-size="11""#;
    for (lo, hi, is_x) in [(f.x0, f.x1, true), (f.y0, f.y1, false)] {
        let step = nice_step(hi - lo);
        let mut t = (lo / step).ceil() * step;
        while t <= hi + 1e-9 * step {
            let lab = tick_label(t, step);
            if is_x {
                let x = c2(f.px(t));
                let y = MARGIN + f.h;
                let _ = writeln!(out, r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#000000"/>"##, c2(y), c2(y + 5.0));
                let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle" {font}>{lab}</text>"#, c2(y + 18.0));
            } else {
                let y = c2(f.py(t));
                let _ = writeln!(out, r##"<line x1="{}" y1="{y}" x2="{MARGIN}" y2="{y}" stroke="#000000"/>"##, c2(MARGIN - 5.0));
                let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle" {font}>{lab}</text>"#, c2(MARGIN - 8.0));
            }
            t += step;
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" {font}>{}</text>"#, c2(MARGIN + f.w / 2.0), c2(MARGIN + f.h + 40.0), escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})" {font}>{}</text>"#,
        escape(y_label),
        y = c2(MARGIN + f.h / 2.0)
    );
}

fn frame(style: &Style, x: (f64, f64), y: (f64, f64)) -> Frame {
    let fix = |(a, b): (f64, f64)| {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            let m = if a.is_finite() { a } else { 0.0 };
            (m - 1.0, m + 1.0)
        } else {
            (a, b)
        }
    };
    let (x0, x1) = fix(x);
    let (y0, y1) = fix(y);
    Frame {
        x0,
        x1,
        y0,
        y1,
        w: style.width - 2.0 * MARGIN,
        h: style.height - 2.0 * MARGIN,
    }
}

/// Both hyperbolas `φ² - v²/3 = c` (solid) and `φ² - v² = c` (dashed).
fn hyperbolas(out: &mut String, f: &Frame, c: f64) {
    let n = 200;
    for (scale, class, dash) in [(3.0, "patch-hyperbola", ""), (1.0, "jump-hyperbola", r#" stroke-dasharray="6 4""#)] {
        let mut branches: Vec<Vec<(f64, f64)>> = Vec::new();
        if c >= 0.0 {
            // φ = ±√(c + v²/scale)
            for s in [1.0, -1.0] {
                branches.push(
                    (0..=n)
                        .map(|i| {
                            let v = f.y0 + (f.y1 - f.y0) * i as f64 / n as f64;
                            (s * (c + v * v / scale).sqrt(), v)
                        })
                        .collect(),
                );
            }
        } else {
            // v = ±√(scale (φ² - c))
            for s in [1.0, -1.0] {
                branches.push(
                    (0..=n)
                        .map(|i| {
                            let p = f.x0 + (f.x1 - f.x0) * i as f64 / n as f64;
                            (p, s * (scale * (p * p - c)).sqrt())
                        })
                        .collect(),
                );
            }
        }
        for b in branches {
            let _ = writeln!(
                out,
                r##"<path class="{class}" d="{}" fill="none" stroke="#000000" stroke-width="1.2"{dash}/>"##,
                path_d(f, &b)
            );
        }
    }
}

pub fn render_svg(data: &Dataset, style: &Style) -> String {
    let mut out = String::new();
    header(&mut out, style);
    match data {
        Dataset::Empty => {
            let f = frame(style, (-1.0, 1.0), (-1.0, 1.0));
            axes(&mut out, &f, "", "");
        }
        Dataset::Phase(d) => {
            let f = frame(style, (-d.phi_max, d.phi_max), (-d.v_max, d.v_max));
            axes(&mut out, &f, "φ", "v");
            let _ = writeln!(out, r#"<g clip-path="url(#plot-area)">"#);
            for (i, lvl) in d.levels.iter().enumerate() {
                let col = PALETTE[i % PALETTE.len()];
                for p in &lvl.paths {
                    let _ = writeln!(
                        out,
                        r#"<path class="level" data-h="{}" d="{}" fill="none" stroke="{col}" stroke-width="1"/>"#,
                        crate::format::num(lvl.h),
                        path_d(&f, p)
                    );
                }
            }
            hyperbolas(&mut out, &f, d.params.c);
            for cp in &d.critical {
                let (x, y) = (c2(f.px(cp.location.phi)), c2(f.py(cp.location.v)));
                match cp.kind {
                    CriticalKind::Center => {
                        let _ = writeln!(out, r##"<circle class="center" cx="{x}" cy="{y}" r="3.5" fill="#000000"/>"##);
                    }
                    CriticalKind::Saddle => {
                        let _ = writeln!(out, r##"<circle class="saddle" cx="{x}" cy="{y}" r="3.5" fill="#ffffff" stroke="#000000"/>"##);
                    }
                    CriticalKind::Degenerate => {
                        let _ = writeln!(out, r##"<rect class="degenerate" x="{}" y="{}" width="6" height="6" fill="#888888"/>"##, c2(f.px(cp.location.phi) - 3.0), c2(f.py(cp.location.v) - 3.0));
                    }
                }
            }
            let _ = writeln!(out, "</g>");
        }
        Dataset::Curve(d) => {
            let (mut xa, mut xb, mut ya, mut yb) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for v in &d.vertices {
                xa = xa.min(v[0]);
                xb = xb.max(v[0]);
                ya = ya.min(v[1]);
                yb = yb.max(v[1]);
            }
            // equal aspect ratio with 6% padding
            let w = style.width - 2.0 * MARGIN;
            let h = style.height - 2.0 * MARGIN;
            let span = ((xb - xa) / w).max((yb - ya) / h).max(1e-12) * 1.06;
            let (cx, cy) = (0.5 * (xa + xb), 0.5 * (ya + yb));
            let f = frame(style, (cx - 0.5 * span * w, cx + 0.5 * span * w), (cy - 0.5 * span * h, cy + 0.5 * span * h));
            axes(&mut out, &f, "x", "y");
            let pts: Vec<(f64, f64)> = d.vertices.iter().map(|v| (v[0], v[1])).collect();
            let mut dpath = path_d(&f, &pts);
            if d.closed && !dpath.is_empty() {
                dpath.push_str(" Z");
            }
            let _ = writeln!(out, r##"<path class="curve" d="{dpath}" fill="none" stroke="#1f77b4" stroke-width="1.4"/>"##);
            let last = d.vertices.len().saturating_sub(1);
            for &(i, kind) in &d.markers {
                // the closing vertex repeats vertex 0
                if d.closed && i == last && d.markers.iter().any(|m| m.0 == 0) {
                    continue;
                }
                let v = d.vertices[i];
                let (x, y) = (f.px(v[0]), f.py(v[1]));
                match kind {
                    AtomKind::Cusp => {
                        let _ = writeln!(out, r##"<circle class="cusp" cx="{}" cy="{}" r="4" fill="#d62728"/>"##, c2(x), c2(y));
                    }
                    AtomKind::Singular => {
                        let _ = writeln!(out, r##"<rect class="singular" x="{}" y="{}" width="7" height="7" fill="#2ca02c"/>"##, c2(x - 3.5), c2(y - 3.5));
                    }
                }
            }
        }
        Dataset::Series(d) => {
            let all = d.lines.iter().flatten().chain(d.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
            let (mut xa, mut xb, mut ya, mut yb) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for &(x, y) in all {
                xa = xa.min(x);
                xb = xb.max(x);
                ya = ya.min(y);
                yb = yb.max(y);
            }
            let pad = 0.05 * (yb - ya).max(1e-12);
            let f = frame(style, (xa, xb), (ya - pad, yb + pad));
            axes(&mut out, &f, &d.x_label, &d.y_label);
            let _ = writeln!(out, r#"<g clip-path="url(#plot-area)">"#);
            for (i, l) in d.lines.iter().enumerate() {
                let _ = writeln!(
                    out,
                    r#"<path class="series" d="{}" fill="none" stroke="{}" stroke-width="1.4"/>"#,
                    path_d(&f, l),
                    PALETTE[i % PALETTE.len()]
                );
            }
            for &(x, y) in &d.points {
                let _ = writeln!(out, r##"<circle class="point" cx="{}" cy="{}" r="2.5" fill="#000000"/>"##, c2(f.px(x)), c2(f.py(y)));
            }
            let _ = writeln!(out, "</g>");
        }
    }
    out.push_str("</svg>\n");
    out
}

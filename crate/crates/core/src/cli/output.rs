//! Curve CSV, SVG plot and text report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rve::{Elbow, RveCurve};

pub const CSV_HEADER: &str = "w_px,w_um,D_bar,N_k,D_min,D_median,D_max";

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub w_px: usize,
    pub w_um: f64,
    pub d_bar: f64,
    pub n_k: usize,
    pub d_min: f64,
    pub d_median: f64,
    pub d_max: f64,
}

pub fn curve_rows(curve: &RveCurve) -> Vec<CurveRow> {
    curve
        .points
        .iter()
        .map(|p| CurveRow {
            w_px: p.w,
            w_um: p.w as f64 * curve.scale,
            d_bar: p.mean_d,
            n_k: p.n_positions,
            d_min: p.min_d,
            d_median: p.median_d,
            d_max: p.max_d,
        })
        .collect()
}

/// CSV text with LF line endings. Floats use the shortest representation
/// that parses back to the same value.
pub fn csv_text(rows: &[CurveRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.w_px, r.w_um, r.d_bar, r.n_k, r.d_min, r.d_median, r.d_max
        );
    }
    s
}

pub fn parse_csv(text: &str) -> std::result::Result<Vec<CurveRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == CSV_HEADER => {}
        _ => return Err(format!("expected header `{CSV_HEADER}`")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || format!("line {}: malformed row", i + 2);
            let f: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            let int = |k: usize| f[k].parse::<usize>().map_err(|_| bad());
            Ok(CurveRow {
                w_px: int(0)?,
                w_um: num(1)?,
                d_bar: num(2)?,
                n_k: int(3)?,
                d_min: num(4)?,
                d_median: num(5)?,
                d_max: num(6)?,
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|msg| Error::format(path, msg))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Horizontal pixel coordinate of window size `w` on a plot spanning
/// `w_lo..=w_hi`.
pub fn svg_x(w: f64, w_lo: f64, w_hi: f64) -> f64 {
    LEFT + (w - w_lo) / (w_hi - w_lo) * (SVG_W - LEFT - RIGHT)
}

/// Line plot of `D̄` against `w` with a dashed vertical marker at `rve_w`.
pub fn svg_plot(points: &[(f64, f64)], rve_w: f64) -> String {
    let w_lo = points.first().map_or(0.0, |p| p.0);
    let w_hi = points.last().map_or(1.0, |p| p.0).max(w_lo + 1.0);
    let d_hi = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let d_hi = if d_hi > 0.0 { d_hi } else { 1.0 };
    let y = |d: f64| SVG_H - BOTTOM - d / d_hi * (SVG_H - TOP - BOTTOM);
    let (x0, x1, y0, y1) = (LEFT, SVG_W - RIGHT, TOP, SVG_H - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M {x0} {y0} L {x0} {y1} L {x1} {y1}" fill="none" stroke="black"/>"#
    );
    let polyline: Vec<String> = points
        .iter()
        .map(|&(w, d)| format!("{:.2},{:.2}", svg_x(w, w_lo, w_hi), y(d)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline class="curve" points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        polyline.join(" ")
    );
    for &(w, d) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            svg_x(w, w_lo, w_hi),
            y(d)
        );
    }
    let xm = svg_x(rve_w, w_lo, w_hi);
    let _ = writeln!(
        s,
        r#"<line class="rve-marker" x1="{xm:.2}" y1="{y0}" x2="{xm:.2}" y2="{y1}" stroke="firebrick" stroke-dasharray="6 4"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" fill="firebrick" font-size="12">RVE {rve_w}</text>"#,
        xm + 4.0,
        y0 + 12.0
    );
    for (w, anchor) in [(w_lo, "start"), (w_hi, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="{anchor}" font-size="12">{w}</text>"#,
            svg_x(w, w_lo, w_hi),
            y1 + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="13">window size w (px)</text>"#,
        0.5 * (x0 + x1),
        SVG_H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{}" text-anchor="end" font-size="12">{d_hi:.3e}</text>"#,
        y0 + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle" font-size="13">mean D</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );
    s.push_str("</svg>\n");
    s
}

/// Selection summary shared by the `run` and `curve` reports.
pub fn elbow_summary(sizes: &[usize], elbow: &Elbow, scale: f64) -> String {
    let mut s = String::new();
    let rve = sizes[elbow.rve_index];
    let _ = writeln!(s, "elbow_w_px = {}", sizes[elbow.elbow_index]);
    let _ = writeln!(s, "rve_px = {rve}");
    let _ = writeln!(s, "rve_um = {}", rve as f64 * scale);
    match elbow.threshold_index {
        Some(k) => {
            let _ = writeln!(s, "threshold_rule_px = {}", sizes[k]);
        }
        None => {
            let _ = writeln!(s, "threshold_rule_px = none");
        }
    }
    let _ = writeln!(s, "max_chord_distance = {:.6}", elbow.max_distance);
    let _ = writeln!(s, "rules_agree = {}", elbow.rules_agree());
    let _ = writeln!(
        s,
        "confidence = {}",
        if elbow.low_confidence() { "low" } else { "normal" }
    );
    s
}

pub fn run_report(config_echo: &str, curve: &RveCurve, vf: f64) -> String {
    let mut s = String::new();
    s.push_str("[config]\n");
    s.push_str(config_echo);
    s.push_str("\n[micrograph]\n");
    let (h, w) = curve.micrograph_dims;
    let _ = writeln!(s, "size_px = {h}x{w}");
    let _ = writeln!(s, "volume_fraction = {vf}");
    let (r, c) = curve.field_dims;
    let _ = writeln!(s, "score_field_px = {r}x{c}");
    let _ = writeln!(s, "score_dim = {}", curve.score_dim);

    s.push_str("\n[model]\n");
    let f = &curve.fit;
    let _ = writeln!(s, "kind = {}", curve.model_kind);
    match f.cv_balanced_accuracy {
        Some(a) => {
            let _ = writeln!(s, "cv_balanced_accuracy = {a:.6}");
        }
        None => {
            let _ = writeln!(s, "cv_balanced_accuracy = not computed");
        }
    }
    let _ = writeln!(s, "training_nll = {}", f.final_nll);
    let _ = writeln!(s, "gradient_inf_norm = {:e}", f.grad_inf_norm);
    let _ = writeln!(s, "converged = {}", f.converged);
    let _ = writeln!(s, "learning_rate = {}", f.learning_rate);
    let _ = writeln!(s, "mean_score_norm = {:e}", curve.mean_score_norm);

    s.push_str("\n[curve]\n");
    let _ = writeln!(s, "# w_px  N_k  D_bar");
    for p in &curve.points {
        let _ = writeln!(s, "{:>6}  {:>9}  {:.6e}", p.w, p.n_positions, p.mean_d);
    }

    s.push_str("\n[selection]\n");
    s.push_str(&elbow_summary(&curve.sizes(), &curve.elbow, curve.scale));
    let _ = writeln!(s, "size_warning = {}", curve.size_warning);
    if curve.size_warning {
        let _ = writeln!(
            s,
            "# the selected size exceeds a quarter of the shorter micrograph side; \
             the micrograph may be too small for a reliable estimate"
        );
    }
    s
}

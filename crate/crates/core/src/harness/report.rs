//! Report files: JSON, flat CSV and SVG box plots. Files are written to a
//! temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::Report;
use crate::error::{param, Result};
use crate::metrics::{Summary, METRIC_NAMES};

pub const CSV_HEADER: &str = "trial,method,f_score,f_pb,oa,kappa,pa,ua,commission,omission,train_seconds";

const TIMING_FIELDS: [&str; 4] = ["train_seconds", "predict_seconds", "tune_seconds", "wall_time"];

pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_report_json(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(report)?)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// One row per (trial, method); failed records leave metric cells empty.
pub fn write_report_csv(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.trials {
        let _ = write!(out, "{},{}", r.trial, r.method);
        for m in ["f_score", "f_pb", "oa", "kappa", "pa", "ua", "commission", "omission"] {
            match r.assessment.as_ref().and_then(|a| a.get(m)) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(out, ",{}", r.train_seconds);
    }
    write_atomic(path, out.as_bytes())
}

/// Removes wall-clock fields at any depth.
pub fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for f in TIMING_FIELDS {
                map.remove(f);
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn check_metric(metric: &str) -> Result<()> {
    if METRIC_NAMES.contains(&metric) {
        Ok(())
    } else {
        param(format!("unknown metric {metric:?}; valid metrics: {}", METRIC_NAMES.join(", ")))
    }
}

/// Standalone SVG with one box group per method: whiskers at min and max,
/// box from q1 to q3, a line at the median. Statistics are the report's
/// own aggregates.
pub fn render_boxplot(report: &Report, metric: &str) -> Result<String> {
    check_metric(metric)?;
    let boxes: Vec<(&String, &Summary)> =
        report.aggregates.iter().filter_map(|(m, stats)| stats.get(metric).map(|s| (m, s))).collect();
    if boxes.is_empty() {
        return param(format!("report has no values for metric {metric:?}"));
    }
    let mut lo = boxes.iter().map(|(_, s)| s.min).fold(f64::INFINITY, f64::min);
    let mut hi = boxes.iter().map(|(_, s)| s.max).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let (left, top, plot_h, slot) = (70.0, 30.0, 300.0, 90.0);
    let width = left + slot * boxes.len() as f64 + 20.0;
    let height = top + plot_h + 50.0;
    let y = |v: f64| top + plot_h * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{metric}</text>"#, width / 2.0);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{yy:.2}" x2="{left}" y2="{yy:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, left - 8.0, yy + 4.0);
    }
    for (i, (method, st)) in boxes.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let (x0, x1) = (cx - slot * 0.3, cx + slot * 0.3);
        let _ = writeln!(
            s,
            r#"<g class="box" data-method="{method}" data-min="{}" data-q1="{}" data-median="{}" data-q3="{}" data-max="{}">"#,
            st.min, st.q1, st.median, st.q3, st.max
        );
        let _ = writeln!(s, r#"  <line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#, y(st.max), y(st.q3));
        let _ = writeln!(s, r#"  <line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#, y(st.q1), y(st.min));
        for v in [st.min, st.max] {
            let _ = writeln!(s, r#"  <line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, cx - 10.0, y(v), cx + 10.0, y(v));
        }
        let _ = writeln!(
            s,
            r##"  <rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            y(st.q3),
            x1 - x0,
            (y(st.q1) - y(st.q3)).max(0.5)
        );
        let _ = writeln!(s, r#"  <line x1="{x0:.2}" y1="{:.2}" x2="{x1:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#, y(st.median), y(st.median));
        let _ = writeln!(s, r#"  <text x="{cx}" y="{}" text-anchor="middle">{method}</text>"#, top + plot_h + 20.0);
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn emit_boxplot(report: &Report, metric: &str, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_boxplot(report, metric)?;
    write_atomic(path, svg.as_bytes())
}

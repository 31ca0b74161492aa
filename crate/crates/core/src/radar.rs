//! Log-scaled radar comparison of several cities' metric reports.

use crate::metrics::MetricsReport;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

pub const AXES: [&str; 8] = ["N", "L", "L/N", "delta", "T", "F", "K", "W"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadarError {
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarCity {
    pub name: String,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarData {
    pub axes: Vec<String>,
    pub cities: Vec<RadarCity>,
}

fn axis_values(m: &MetricsReport) -> [f64; 8] {
    [
        m.N as f64,
        m.L as f64,
        m.L_over_N,
        m.delta,
        m.T as f64,
        m.F,
        m.K,
        m.W,
    ]
}

/// Per axis, `(log10 v - log10 min) / (log10 max - log10 min)` over the
/// compared set, or 0.5 where every city has the same value.
pub fn radar_export(reports: &[(String, MetricsReport)]) -> Result<RadarData, RadarError> {
    if reports.len() < 2 {
        return Err(RadarError::Domain(format!(
            "radar needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    let raw: Vec<[f64; 8]> = reports.iter().map(|(_, m)| axis_values(m)).collect();
    for ((name, _), values) in reports.iter().zip(&raw) {
        for (axis, v) in AXES.iter().zip(values) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(RadarError::Domain(format!(
                    "{name}: axis {axis} has value {v}; log scale needs positive values"
                )));
            }
        }
    }

    let mut normalized = vec![[0.0; 8]; raw.len()];
    for a in 0..AXES.len() {
        let logs: Vec<f64> = raw.iter().map(|r| r[a].log10()).collect();
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, l) in logs.iter().enumerate() {
            normalized[i][a] = if hi == lo { 0.5 } else { (l - lo) / (hi - lo) };
        }
    }

    Ok(RadarData {
        axes: AXES.iter().map(|s| s.to_string()).collect(),
        cities: reports
            .iter()
            .zip(raw)
            .zip(normalized)
            .map(|(((name, _), raw), norm)| RadarCity {
                name: name.clone(),
                raw: raw.to_vec(),
                normalized: norm.to_vec(),
            })
            .collect(),
    })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

impl RadarData {
    /// Static SVG: axis spokes, a reference ring at 0.5 and 1.0, and one
    /// closed polygon per city. Normalized 0 sits on a small inner ring so
    /// that an all-minimum city is still visible.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 480.0;
        const CENTER: f64 = SIZE / 2.0;
        const OUTER: f64 = 180.0;
        const INNER: f64 = 18.0;
        let n = self.axes.len();
        let point = |axis: usize, v: f64| {
            let theta = std::f64::consts::TAU * axis as f64 / n as f64;
            let r = INNER + (OUTER - INNER) * v;
            (CENTER + r * theta.sin(), CENTER - r * theta.cos())
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        for ring in [0.5, 1.0] {
            let pts: Vec<String> = (0..n)
                .map(|a| {
                    let (x, y) = point(a, ring);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r##"  <polygon points="{}" fill="none" stroke="#cccccc"/>"##,
                pts.join(" ")
            );
        }
        for (a, name) in self.axes.iter().enumerate() {
            let (x, y) = point(a, 1.0);
            let (lx, ly) = point(a, 1.1);
            let _ = writeln!(
                svg,
                r##"  <line x1="{CENTER:.2}" y1="{CENTER:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#999999"/>"##
            );
            let _ = writeln!(
                svg,
                r#"  <text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="12">{}</text>"#,
                escape(name)
            );
        }
        for (i, city) in self.cities.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = city
                .normalized
                .iter()
                .enumerate()
                .map(|(a, v)| {
                    let (x, y) = point(a, *v);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"  <polygon class="city" data-name="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="{color}" stroke-width="2"/>"#,
                escape(&city.name),
                pts.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"  <text x="10" y="{}" font-size="12" fill="{color}">{}</text>"#,
                20 + 16 * i,
                escape(&city.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

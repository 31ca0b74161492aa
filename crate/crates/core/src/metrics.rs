//! Structural properties of an OD network.
//!
//! Conventions:
//! - `delta = 2 * L_nonloop / (N (N - 1))`, zero when `N < 2`; self-loops
//!   are left out of the numerator only.
//! - `K = 2L / N` (mean total degree), `F = T / N`, `W = T / L`.
//! - Coefficients of variation use the population standard deviation.
//! - Node flow is total strength `s_in + s_out`; node degree is `k_in + k_out`.

use crate::odnet::OdNetwork;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("domain error: {0}")]
    Domain(String),
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub N: u64,
    pub L: u64,
    pub T: u64,
    pub L_over_N: f64,
    pub delta: f64,
    pub F: f64,
    pub K: f64,
    pub W: f64,
    pub cv_flow: f64,
    pub cv_degree: f64,
    pub cv_weight: f64,
}

/// The per-count ratios shared by [`compute_metrics`] and [`derive_ratios`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios {
    pub l_over_n: f64,
    pub delta: f64,
    pub f: f64,
    pub k: f64,
    pub w: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Population standard deviation over the mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Domain("empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(MetricsError::Domain(
            "values must be finite and non-negative".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if mean <= 0.0 {
        return Err(MetricsError::Domain("mean is zero".into()));
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    Ok(var.sqrt() / mean)
}

fn ratios(n: u64, l: u64, l_nonloop: u64, t: u64) -> Ratios {
    let (nf, lf, tf) = (n as f64, l as f64, t as f64);
    let delta = if n >= 2 {
        2.0 * l_nonloop as f64 / (nf * (nf - 1.0))
    } else {
        0.0
    };
    Ratios {
        l_over_n: lf / nf,
        delta,
        f: tf / nf,
        k: 2.0 * lf / nf,
        w: if l == 0 { 0.0 } else { tf / lf },
    }
}

/// Ratios from published counts, treating every edge as a non-loop edge.
pub fn derive_ratios(n: u64, l: u64, t: u64) -> Result<Ratios, MetricsError> {
    if n < 2 {
        return Err(MetricsError::Domain(format!("N = {n}, need N >= 2")));
    }
    if l < 1 {
        return Err(MetricsError::Domain("L = 0, need L >= 1".into()));
    }
    if t < l {
        return Err(MetricsError::Domain(format!("T = {t} < L = {l}")));
    }
    Ok(ratios(n, l, l, t))
}

pub fn compute_metrics(net: &OdNetwork) -> Result<MetricsReport, MetricsError> {
    let n = net.node_count() as u64;
    if n == 0 {
        return Err(MetricsError::EmptyNetwork);
    }
    let l = net.edge_count() as u64;
    let t = net.total_weight();
    let l_nonloop = l - net.self_loop_count() as u64;
    let r = ratios(n, l, l_nonloop, t);

    // isolated-only networks have zero flow; report CV 0 rather than fail
    let cv_or_zero = |values: Vec<f64>| coefficient_of_variation(&values).unwrap_or(0.0);
    let flows = net
        .profiles()
        .iter()
        .map(|p| (p.strength_in + p.strength_out) as f64)
        .collect();
    let degrees = net
        .profiles()
        .iter()
        .map(|p| (p.k_in + p.k_out) as f64)
        .collect();
    let weights = net.edges().iter().map(|e| e.weight as f64).collect();

    Ok(MetricsReport {
        N: n,
        L: l,
        T: t,
        L_over_N: r.l_over_n,
        delta: r.delta,
        F: r.f,
        K: r.k,
        W: r.w,
        cv_flow: cv_or_zero(flows),
        cv_degree: cv_or_zero(degrees),
        cv_weight: cv_or_zero(weights),
    })
}

/// Where a report came from. Excludes anything run-specific such as
/// timestamps or thread counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: String,
    pub options: BTreeMap<String, serde_json::Value>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(input: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            options: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn with_option(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.options.insert(key.to_string(), value.into());
        self
    }
}

/// Report JSON: the eleven metric fields plus `provenance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub provenance: Provenance,
}

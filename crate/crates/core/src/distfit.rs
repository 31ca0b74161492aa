//! Edge-weight distributions and power-law fits `p(x) = A x^alpha`.
//!
//! The fit is an ordinary least-squares line through `(log10 x, log10 p)`.
//! By default the weights are first grouped into logarithmic bins so the
//! sparse tail does not dominate the regression; linear mode keeps one
//! point per distinct weight.
//!
//! For integer weights a bin's width is the number of integers it covers,
//! which keeps the density of a flat distribution flat even in the narrow
//! head bins. Real-valued samples use the bin's length instead.

use crate::odnet::OdNetwork;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_BINS_PER_DECADE: u32 = 5;
pub const DEFAULT_MIN_DECADES: f64 = 3.0;
pub const DEFAULT_MIN_R_SQUARED: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("network has no edges")]
    EmptyNetwork,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("need at least 3 bins with positive density, found {0}")]
    InsufficientData(usize),
    #[error("all bin centers are equal")]
    DegenerateX,
}

/// Exact histogram of positive integer weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightDistribution {
    /// `(weight, count)`, weights strictly increasing, counts >= 1.
    entries: Vec<(u64, u64)>,
    total: u64,
}

impl WeightDistribution {
    pub fn from_weights(weights: impl IntoIterator<Item = u64>) -> Result<Self, DistError> {
        let mut ws: Vec<u64> = weights.into_iter().collect();
        if ws.contains(&0) {
            return Err(DistError::Domain("weights must be >= 1".into()));
        }
        ws.sort_unstable();
        let mut entries: Vec<(u64, u64)> = Vec::new();
        for w in ws {
            match entries.last_mut() {
                Some((last, c)) if *last == w => *c += 1,
                _ => entries.push((w, 1)),
            }
        }
        let total = entries.iter().map(|e| e.1).sum();
        Ok(Self { entries, total })
    }

    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    /// Number of edges (sum of counts).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_weight(&self) -> Option<u64> {
        self.entries.first().map(|e| e.0)
    }

    pub fn max_weight(&self) -> Option<u64> {
        self.entries.last().map(|e| e.0)
    }

    /// `weight<TAB>count<TAB>pdf` rows, pdf = count / total.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for &(w, c) in &self.entries {
            writeln!(out, "{w}\t{c}\t{}", c as f64 / self.total as f64)?;
        }
        out.flush()
    }
}

pub fn weight_histogram(net: &OdNetwork) -> Result<WeightDistribution, DistError> {
    if net.edge_count() == 0 {
        return Err(DistError::EmptyNetwork);
    }
    WeightDistribution::from_weights(net.edges().iter().map(|e| e.weight))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Binning {
    Linear,
    Logarithmic { bins_per_decade: u32 },
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Logarithmic {
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
        }
    }
}

impl fmt::Display for Binning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binning::Linear => f.write_str("linear"),
            Binning::Logarithmic { bins_per_decade } => write!(f, "log/{bins_per_decade}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub x_center: f64,
    pub count: u64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDistribution {
    bins: Vec<Bin>,
    binning: Binning,
}

impl BinnedDistribution {
    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn binning(&self) -> Binning {
        self.binning
    }

    /// `(x_center, density)` per non-empty bin.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.bins.iter().map(|b| (b.x_center, b.density)).collect()
    }

    /// Sum of density times width; 1 up to rounding.
    pub fn normalization(&self) -> f64 {
        self.bins.iter().map(|b| b.density * b.width).sum()
    }

    /// `x_center<TAB>density` rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for b in &self.bins {
            writeln!(out, "{}\t{}", b.x_center, b.density)?;
        }
        out.flush()
    }
}

fn check_bins_per_decade(bins_per_decade: u32) -> Result<f64, DistError> {
    if bins_per_decade == 0 {
        return Err(DistError::Domain("bins_per_decade must be >= 1".into()));
    }
    Ok(f64::from(bins_per_decade))
}

/// Geometric bins anchored at the smallest weight and truncated at the
/// largest. Bins without any integer inside them are skipped, as are bins
/// without observations.
pub fn log_bin(dist: &WeightDistribution, bins_per_decade: u32) -> Result<BinnedDistribution, DistError> {
    let per_decade = check_bins_per_decade(bins_per_decade)?;
    let (Some(wmin), Some(wmax)) = (dist.min_weight(), dist.max_weight()) else {
        return Err(DistError::Domain("empty distribution".into()));
    };
    let total = dist.total as f64;
    let edge = |k: u32| wmin as f64 * 10f64.powf(f64::from(k) / per_decade);

    let mut bins = Vec::new();
    let mut entries = dist.entries.iter().peekable();
    let mut k = 0u32;
    let mut first_int = wmin;
    while first_int <= wmax {
        let upper = edge(k + 1);
        // integers in [edge(k), edge(k+1)) are first_int ..= next_first - 1
        let next_first = (upper.ceil() as u64).max(first_int);
        if next_first > first_int {
            let mut count = 0;
            while let Some(&&(w, c)) = entries.peek() {
                if w >= next_first {
                    break;
                }
                count += c;
                entries.next();
            }
            if count > 0 {
                // the last bin stops at the largest observed weight
                let last_int = (next_first - 1).min(wmax);
                let width = (last_int - first_int + 1) as f64;
                bins.push(Bin {
                    lower: edge(k),
                    upper,
                    width,
                    x_center: (first_int as f64 * last_int as f64).sqrt(),
                    count,
                    density: count as f64 / (total * width),
                });
            }
        }
        first_int = next_first;
        k += 1;
    }
    Ok(BinnedDistribution {
        bins,
        binning: Binning::Logarithmic { bins_per_decade },
    })
}

/// Geometric binning of positive real-valued samples given as
/// `(value, multiplicity)`; width is the bin length.
pub fn log_bin_samples(
    samples: &[(f64, u64)],
    bins_per_decade: u32,
) -> Result<BinnedDistribution, DistError> {
    let per_decade = check_bins_per_decade(bins_per_decade)?;
    if samples.is_empty() {
        return Err(DistError::Domain("empty sample".into()));
    }
    if samples.iter().any(|&(v, _)| !(v.is_finite() && v > 0.0)) {
        return Err(DistError::Domain("samples must be positive and finite".into()));
    }
    let vmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let mut counts: std::collections::BTreeMap<u32, u64> = Default::default();
    let mut total = 0u64;
    for &(v, c) in samples {
        let k = (per_decade * (v / vmin).log10()).floor().max(0.0) as u32;
        *counts.entry(k).or_insert(0) += c;
        total += c;
    }
    if total == 0 {
        return Err(DistError::Domain("all multiplicities are zero".into()));
    }
    let bins = counts
        .into_iter()
        .filter(|&(_, c)| c > 0)
        .map(|(k, count)| {
            let lower = vmin * 10f64.powf(f64::from(k) / per_decade);
            let upper = vmin * 10f64.powf(f64::from(k + 1) / per_decade);
            let width = upper - lower;
            Bin {
                lower,
                upper,
                width,
                x_center: (lower * upper).sqrt(),
                count,
                density: count as f64 / (total as f64 * width),
            }
        })
        .collect();
    Ok(BinnedDistribution {
        bins,
        binning: Binning::Logarithmic { bins_per_decade },
    })
}

/// One point per distinct weight, density = count / total.
pub fn linear_bin(dist: &WeightDistribution) -> BinnedDistribution {
    let total = dist.total as f64;
    let bins = dist
        .entries
        .iter()
        .map(|&(w, c)| Bin {
            lower: w as f64,
            upper: w as f64 + 1.0,
            width: 1.0,
            x_center: w as f64,
            count: c,
            density: c as f64 / total,
        })
        .collect();
    BinnedDistribution {
        bins,
        binning: Binning::Linear,
    }
}

pub fn bin(dist: &WeightDistribution, binning: Binning) -> Result<BinnedDistribution, DistError> {
    match binning {
        Binning::Linear => Ok(linear_bin(dist)),
        Binning::Logarithmic { bins_per_decade } => log_bin(dist, bins_per_decade),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    #[serde(rename = "logA")]
    pub log_a: f64,
    pub r_squared: f64,
    pub decades_spanned: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    /// Prefactor `A = 10^logA`.
    pub fn prefactor(&self) -> f64 {
        10f64.powf(self.log_a)
    }
}

/// Least-squares fit of `log10 p = logA + alpha log10 x` over points with `p > 0`.
pub fn fit_points(points: &[(f64, f64)]) -> Result<PowerLawFit, DistError> {
    let mut usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, p)| *p > 0.0 && *x > 0.0 && x.is_finite() && p.is_finite())
        .map(|&(x, p)| (x.log10(), p.log10()))
        .collect();
    if usable.len() < 3 {
        return Err(DistError::InsufficientData(usable.len()));
    }
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|u| u.0).sum::<f64>() / n;
    let mean_y = usable.iter().map(|u| u.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|u| (u.0 - mean_x).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|u| (u.0 - mean_x) * (u.1 - mean_y)).sum();
    let syy: f64 = usable.iter().map(|u| (u.1 - mean_y).powi(2)).sum();
    let span = usable[usable.len() - 1].0 - usable[0].0;
    if span == 0.0 || sxx == 0.0 {
        return Err(DistError::DegenerateX);
    }
    let alpha = sxy / sxx;
    let log_a = mean_y - alpha * mean_x;
    let ss_res: f64 = usable
        .iter()
        .map(|u| (u.1 - (log_a + alpha * u.0)).powi(2))
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        alpha,
        log_a,
        r_squared,
        decades_spanned: span,
        n_points: usable.len(),
    })
}

pub fn fit_power_law(binned: &BinnedDistribution) -> Result<PowerLawFit, DistError> {
    fit_points(&binned.points())
}

/// Fit JSON: `{alpha, logA, r_squared, decades_spanned, n_points, binning}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    #[serde(flatten)]
    pub fit: PowerLawFit,
    pub binning: Binning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Plausible,
    InsufficientSpan,
    PoorFit,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Plausible => "plausible",
            Verdict::InsufficientSpan => "insufficient_span",
            Verdict::PoorFit => "poor_fit",
        })
    }
}

/// Span is checked before fit quality.
pub fn scale_free_verdict(fit: &PowerLawFit, min_decades: f64, min_r_squared: f64) -> Verdict {
    if fit.decades_spanned < min_decades {
        Verdict::InsufficientSpan
    } else if fit.r_squared < min_r_squared {
        Verdict::PoorFit
    } else {
        Verdict::Plausible
    }
}

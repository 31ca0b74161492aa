//! End-to-end run: convert → assign → build → metrics → dist → fit.
//!
//! Every intermediate artifact is written to the output directory along
//! with `summary.json`. Nothing run-specific (thread count, output location,
//! timestamps) goes into an artifact, so reruns are byte-identical.

use crate::distfit::{
    bin, fit_power_law, scale_free_verdict, weight_histogram, Binning, BinnedDistribution,
    DistError, FitDocument, PowerLawFit, Verdict, WeightDistribution, DEFAULT_BINS_PER_DECADE,
    DEFAULT_MIN_DECADES, DEFAULT_MIN_R_SQUARED,
};
use crate::geodesy::{GeoCoordinate, Hemisphere, Utm};
use crate::io::{self, CoordSystem, Coords};
use crate::metrics::{compute_metrics, MetricsError, MetricsReport, Provenance, ReportDocument};
use crate::odnet::{NetworkBuilder, OdNetwork};
use crate::synth::{generate_city, SynthConfig, SynthError};
use crate::zoning::{aggregate_zones, load_mapping, load_zones, IndexKind, ZoneIndex, ZoneSet, ZoningError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Trips per shard when assigning and aggregating in parallel.
const SHARD_SIZE: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Convert,
    Assign,
    Build,
    Metrics,
    Dist,
    Fit,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Convert => "convert",
            Stage::Assign => "assign",
            Stage::Build => "build",
            Stage::Metrics => "metrics",
            Stage::Dist => "dist",
            Stage::Fit => "fit",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

/// Whether a failure came from the inputs or from the tool/environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Internal,
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    pub fn input(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self {
            stage,
            kind: FailureKind::Input,
            source: source.into(),
        }
    }

    pub fn internal(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self {
            stage,
            kind: FailureKind::Internal,
            source: source.into(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_binning() -> Binning {
    Binning::Logarithmic {
        bins_per_decade: DEFAULT_BINS_PER_DECADE,
    }
}

fn default_min_decades() -> f64 {
    DEFAULT_MIN_DECADES
}

fn default_min_r2() -> f64 {
    DEFAULT_MIN_R_SQUARED
}

/// Analysis options shared by the pipeline and the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default = "default_true")]
    pub include_self_loops: bool,
    #[serde(default = "default_binning")]
    pub binning: Binning,
    #[serde(default = "default_min_decades")]
    pub min_decades: f64,
    #[serde(default = "default_min_r2")]
    pub min_r2: f64,
    #[serde(default)]
    pub index: IndexKind,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            include_self_loops: true,
            binning: default_binning(),
            min_decades: DEFAULT_MIN_DECADES,
            min_r2: DEFAULT_MIN_R_SQUARED,
            index: IndexKind::default(),
        }
    }
}

/// Pipeline config JSON. Relative paths are resolved against the config
/// file's directory by [`PipelineConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub trips: PathBuf,
    pub zones: PathBuf,
    #[serde(default)]
    pub coords: Coords,
    #[serde(default)]
    pub utm_zone: Option<u8>,
    #[serde(default)]
    pub hemisphere: Option<Hemisphere>,
    #[serde(default)]
    pub mapping: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub analysis: AnalysisOptions,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PipelineError::input(Stage::Load, format!("{}: {e}", path.display()))
        })?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| {
            PipelineError::input(Stage::Load, format!("{}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.trips);
        resolve(&mut cfg.zones);
        resolve(&mut cfg.output_dir);
        if let Some(m) = cfg.mapping.as_mut() {
            resolve(m);
        }
        Ok(cfg)
    }

    pub fn coord_system(&self) -> Result<CoordSystem, String> {
        CoordSystem::from_parts(self.coords, self.utm_zone, self.hemisphere)
    }
}

/// Zone index over `zones`, aggregated through `mapping` when given.
pub fn zone_index(
    zones: ZoneSet,
    mapping: Option<&crate::zoning::ZoneMapping>,
    kind: IndexKind,
) -> Result<ZoneIndex, ZoningError> {
    let zones = match mapping {
        Some(m) => aggregate_zones(&zones, m)?,
        None => zones,
    };
    Ok(ZoneIndex::build(zones, kind))
}

/// Positions of each trip's origin and destination zone in `index.zones()`,
/// `None` when either endpoint falls outside every zone. Output order
/// matches input order regardless of `threads`.
pub fn assign_trips(
    index: &ZoneIndex,
    trips: &[(GeoCoordinate, GeoCoordinate, u64)],
    threads: usize,
) -> Result<Vec<Option<(usize, usize)>>, rayon::ThreadPoolBuildError> {
    let one = |(o, d, _): &(GeoCoordinate, GeoCoordinate, u64)| {
        Some((index.assign_position(*o)?, index.assign_position(*d)?))
    };
    if threads <= 1 {
        return Ok(trips.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(|| trips.par_iter().with_min_len(SHARD_SIZE).map(one).collect()))
}

/// Aggregates assigned trips, one builder per shard, merged at the end.
pub fn build_from_assigned(
    index: &ZoneIndex,
    trips: &[(GeoCoordinate, GeoCoordinate, u64)],
    assigned: &[Option<(usize, usize)>],
    include_self_loops: bool,
    threads: usize,
) -> Result<OdNetwork, rayon::ThreadPoolBuildError> {
    let zones = index.zones().zones();
    let shard = |range: std::ops::Range<usize>| {
        let mut b = NetworkBuilder::new(include_self_loops);
        for i in range {
            if let Some((o, d)) = assigned[i] {
                b.add_trip(zones[o].id(), zones[d].id(), trips[i].2);
            }
        }
        b
    };
    let starts: Vec<usize> = (0..trips.len()).step_by(SHARD_SIZE).collect();
    let ranges = starts.iter().map(|&s| s..(s + SHARD_SIZE).min(trips.len()));
    if threads <= 1 {
        return Ok(ranges.map(shard).fold(NetworkBuilder::new(include_self_loops), NetworkBuilder::merge).finish());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let ranges: Vec<_> = ranges.collect();
    Ok(pool
        .install(|| {
            ranges
                .into_par_iter()
                .map(shard)
                .reduce(|| NetworkBuilder::new(include_self_loops), NetworkBuilder::merge)
        })
        .finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RecordCounts {
    /// Data rows in the trip file.
    pub records: u64,
    pub assigned: u64,
    /// Rows with an endpoint outside every zone.
    pub dropped: u64,
    /// Trips, i.e. rows weighted by their count.
    pub trips: u64,
    pub trips_dropped: u64,
    pub self_loop_trips_discarded: u64,
    pub outside_zone_half_width: u64,
}

/// In-memory result of assign → build → metrics → dist → fit.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub assigned: Vec<Option<(usize, usize)>>,
    pub counts: RecordCounts,
    pub network: OdNetwork,
    pub metrics: MetricsReport,
    pub histogram: WeightDistribution,
    pub binned: BinnedDistribution,
    pub fit: FitOutcome,
}

/// A fit, or why there is none. Too few distinct weights to regress on is
/// a property of the data rather than a failure, so it does not abort a run.
#[derive(Debug, Clone, PartialEq)]
pub enum FitOutcome {
    Fitted { fit: PowerLawFit, verdict: Verdict },
    Skipped(DistError),
}

impl FitOutcome {
    pub fn fitted(&self) -> Option<(&PowerLawFit, Verdict)> {
        match self {
            FitOutcome::Fitted { fit, verdict } => Some((fit, *verdict)),
            FitOutcome::Skipped(_) => None,
        }
    }
}

fn dist_stage(e: DistError) -> PipelineError {
    PipelineError::input(Stage::Dist, e)
}

pub fn analyze(
    index: &ZoneIndex,
    trips: &[(GeoCoordinate, GeoCoordinate, u64)],
    options: &AnalysisOptions,
    threads: usize,
) -> Result<Analysis, PipelineError> {
    let assigned =
        assign_trips(index, trips, threads).map_err(|e| PipelineError::internal(Stage::Assign, e))?;
    let network = build_from_assigned(index, trips, &assigned, options.include_self_loops, threads)
        .map_err(|e| PipelineError::internal(Stage::Build, e))?;

    let mut counts = RecordCounts {
        records: trips.len() as u64,
        self_loop_trips_discarded: network.discarded_self_loops(),
        ..RecordCounts::default()
    };
    for (t, a) in trips.iter().zip(&assigned) {
        counts.trips += t.2;
        if a.is_some() {
            counts.assigned += 1;
        } else {
            counts.dropped += 1;
            counts.trips_dropped += t.2;
        }
    }

    let metrics = compute_metrics(&network).map_err(|e| match e {
        MetricsError::EmptyNetwork => PipelineError::input(
            Stage::Metrics,
            format!("no trips left after assignment ({} of {} rows dropped)", counts.dropped, counts.records),
        ),
        other => PipelineError::internal(Stage::Metrics, other),
    })?;
    let histogram = weight_histogram(&network).map_err(dist_stage)?;
    let binned = bin(&histogram, options.binning).map_err(dist_stage)?;
    let fit = match fit_power_law(&binned) {
        Ok(fit) => FitOutcome::Fitted {
            verdict: scale_free_verdict(&fit, options.min_decades, options.min_r2),
            fit,
        },
        Err(e @ (DistError::InsufficientData(_) | DistError::DegenerateX)) => FitOutcome::Skipped(e),
        Err(e) => return Err(PipelineError::input(Stage::Fit, e)),
    };
    Ok(Analysis {
        assigned,
        counts,
        network,
        metrics,
        histogram,
        binned,
        fit,
    })
}

/// `fit.json`: the fit document plus the scale-free verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub document: FitDocument,
    pub verdict: Verdict,
}

/// `fit.json` when there was nothing to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFit {
    pub binning: Binning,
    pub skipped: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryInputs {
    pub trips: String,
    pub zones: String,
    pub mapping: Option<String>,
    pub coords: Coords,
    pub utm_zone: Option<u8>,
    pub hemisphere: Option<Hemisphere>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub inputs: SummaryInputs,
    pub options: AnalysisOptions,
    pub counts: RecordCounts,
    pub metrics: MetricsReport,
    pub fit: Option<FitDocument>,
    pub verdict: Option<Verdict>,
    pub fit_skipped: Option<String>,
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

pub const SUMMARY_FILE: &str = "summary.json";

fn file_label(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::internal(Stage::Write, format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    let fail = |e: String| PipelineError::internal(Stage::Write, format!("{}: {e}", path.display()));
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| fail(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| fail(e.to_string()))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), Box<dyn std::error::Error + Send + Sync>>,
{
    let mut w = create(path)?;
    f(&mut w)
        .and_then(|_| w.flush().map_err(Into::into))
        .map_err(|e| PipelineError::internal(Stage::Write, format!("{}: {e}", path.display())))
}

pub fn run_pipeline(config: &PipelineConfig, threads: usize) -> Result<PipelineSummary, PipelineError> {
    let system = config
        .coord_system()
        .map_err(|e| PipelineError::input(Stage::Load, e))?;
    let zones = load_zones(&config.zones).map_err(|e| PipelineError::input(Stage::Load, e))?;
    let mapping = config
        .mapping
        .as_ref()
        .map(load_mapping)
        .transpose()
        .map_err(|e| PipelineError::input(Stage::Load, e))?;
    let file = File::open(&config.trips).map_err(|e| {
        PipelineError::input(Stage::Load, format!("{}: {e}", config.trips.display()))
    })?;
    let records = io::read_trips(std::io::BufReader::new(file), system).map_err(|e| {
        PipelineError::input(Stage::Load, format!("{}: {e}", config.trips.display()))
    })?;

    let geo = io::trips_to_geo(&records, &Utm::default()).map_err(|(i, e)| {
        PipelineError::input(Stage::Convert, format!("trip {}: {e}", i + 1))
    })?;

    let index = zone_index(zones, mapping.as_ref(), config.analysis.index)
        .map_err(|e| PipelineError::input(Stage::Assign, e))?;
    let mut analysis = analyze(&index, &geo.trips, &config.analysis, threads)?;
    analysis.counts.outside_zone_half_width = geo.outside_half_width;

    let out = &config.output_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| PipelineError::internal(Stage::Write, format!("{}: {e}", out.display())))?;
    let mut artifacts = Vec::new();
    let mut record = |name: &str| {
        artifacts.push(name.to_string());
        out.join(name)
    };

    if matches!(system, CoordSystem::Utm { .. }) {
        write_with(&record("trips_geo.csv"), |w| Ok(io::write_geo_trips(w, &geo.trips)?))?;
    }
    let ids = index.zones().zones();
    write_with(&record("zoned_trips.csv"), |w| {
        let rows = geo
            .trips
            .iter()
            .zip(&analysis.assigned)
            .filter_map(|(t, a)| a.map(|(o, d)| (ids[o].id(), ids[d].id(), t.2)));
        Ok(io::write_zoned_trips(w, rows)?)
    })?;
    write_with(&record("edges.tsv"), |w| Ok(analysis.network.write_tsv(w)?))?;

    let provenance = Provenance::new(file_label(&config.trips))
        .with_option("include_self_loops", config.analysis.include_self_loops);
    write_json(
        &record("metrics.json"),
        &ReportDocument {
            metrics: analysis.metrics,
            provenance,
        },
    )?;
    write_with(&record("weight_hist.tsv"), |w| Ok(analysis.histogram.write_tsv(w)?))?;
    write_with(&record("binned.tsv"), |w| Ok(analysis.binned.write_tsv(w)?))?;
    let binning = config.analysis.binning;
    let (fit_doc, verdict, fit_skipped) = match &analysis.fit {
        FitOutcome::Fitted { fit, verdict } => {
            let document = FitDocument { fit: *fit, binning };
            write_json(
                &record("fit.json"),
                &FitReport {
                    document,
                    verdict: *verdict,
                },
            )?;
            (Some(document), Some(*verdict), None)
        }
        FitOutcome::Skipped(e) => {
            let skipped = e.to_string();
            write_json(
                &record("fit.json"),
                &SkippedFit {
                    binning,
                    skipped: skipped.clone(),
                },
            )?;
            (None, None, Some(skipped))
        }
    };
    artifacts.push(SUMMARY_FILE.to_string());

    let summary = PipelineSummary {
        inputs: SummaryInputs {
            trips: file_label(&config.trips),
            zones: file_label(&config.zones),
            mapping: config.mapping.as_deref().map(file_label),
            coords: config.coords,
            utm_zone: config.utm_zone,
            hemisphere: config.hemisphere,
        },
        options: config.analysis,
        counts: analysis.counts,
        metrics: analysis.metrics,
        fit: fit_doc,
        verdict,
        fit_skipped,
        artifacts,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// One synthetic city in a comparison.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub label: String,
    pub poles: usize,
    pub trips: u64,
    pub seed: u64,
    pub alpha: f64,
    pub r_squared: f64,
    pub decades_spanned: f64,
    pub n_points: usize,
    pub verdict: Verdict,
    pub N: u64,
    pub L: u64,
    pub T: u64,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{label}: {source}")]
    Synth {
        label: String,
        #[source]
        source: SynthError,
    },
    #[error("{label}: {source}")]
    Pipeline {
        label: String,
        #[source]
        source: PipelineError,
    },
}

/// Generates each city and runs it through the in-memory pipeline.
pub fn run_experiment(
    cities: &[(String, SynthConfig)],
    options: &AnalysisOptions,
    threads: usize,
) -> Result<Vec<ExperimentRow>, ExperimentError> {
    cities
        .iter()
        .map(|(label, cfg)| {
            let city = generate_city(cfg).map_err(|source| ExperimentError::Synth {
                label: label.clone(),
                source,
            })?;
            let trips: Vec<_> = city
                .trips
                .iter()
                .map(|t| match (t.origin, t.destination) {
                    (crate::odnet::Endpoint::Geo(o), crate::odnet::Endpoint::Geo(d)) => (o, d, t.multiplicity),
                    _ => unreachable!("synthetic trips are geographic"),
                })
                .collect();
            let index = ZoneIndex::build(city.zones, options.index);
            let a = analyze(&index, &trips, options, threads).map_err(|source| {
                ExperimentError::Pipeline {
                    label: label.clone(),
                    source,
                }
            })?;
            let (fit, verdict) = match &a.fit {
                FitOutcome::Fitted { fit, verdict } => (*fit, *verdict),
                FitOutcome::Skipped(e) => {
                    return Err(ExperimentError::Pipeline {
                        label: label.clone(),
                        source: PipelineError::input(Stage::Fit, e.clone()),
                    })
                }
            };
            Ok(ExperimentRow {
                label: label.clone(),
                poles: cfg.poles.len(),
                trips: cfg.trips,
                seed: cfg.seed,
                alpha: fit.alpha,
                r_squared: fit.r_squared,
                decades_spanned: fit.decades_spanned,
                n_points: fit.n_points,
                verdict,
                N: a.metrics.N,
                L: a.metrics.L,
                T: a.metrics.T,
            })
        })
        .collect()
}

/// Side-by-side monocentric (1 pole) vs polycentric (9 equal poles) cities.
pub fn conjecture_experiment(
    trips: u64,
    seed: u64,
    options: &AnalysisOptions,
    threads: usize,
) -> Result<Vec<ExperimentRow>, ExperimentError> {
    run_experiment(
        &[
            ("monocentric".to_string(), SynthConfig::monocentric(trips, seed)),
            ("polycentric".to_string(), SynthConfig::polycentric(trips, seed)),
        ],
        options,
        threads,
    )
}

/// Tab-separated table, one row per city.
pub fn format_experiment(rows: &[ExperimentRow]) -> String {
    let mut s = String::from("label\tpoles\ttrips\tseed\talpha\tr_squared\tdecades\tn_points\tverdict\tN\tL\tT\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.3}\t{}\t{}\t{}\t{}\t{}\n",
            r.label, r.poles, r.trips, r.seed, r.alpha, r.r_squared, r.decades_spanned, r.n_points,
            r.verdict, r.N, r.L, r.T
        ));
    }
    s
}

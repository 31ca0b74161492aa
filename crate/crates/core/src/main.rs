use clap::{Args, Parser, Subcommand, ValueEnum};
use odflow::distfit::{
    bin, fit_power_law, scale_free_verdict, weight_histogram, Binning, FitDocument,
    DEFAULT_BINS_PER_DECADE, DEFAULT_MIN_DECADES, DEFAULT_MIN_R_SQUARED,
};
use odflow::geodesy::{outside_zone_half_width, Hemisphere, Utm};
use odflow::io::{self, CoordSystem, Coords};
use odflow::metrics::{compute_metrics, MetricsReport, Provenance, ReportDocument};
use odflow::odnet::{build_network, OdNetwork};
use odflow::pipeline::{
    self, assign_trips, conjecture_experiment, format_experiment, zone_index, AnalysisOptions,
    FailureKind, FitReport, PipelineConfig, PipelineError,
};
use odflow::radar::radar_export;
use odflow::synth::{generate_city, SynthConfig};
use odflow::zoning::{load_mapping, load_zones, IndexKind};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "odflow", version, about = "Origin-destination trip networks: build, measure, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a trip file between UTM and geographic coordinates
    Convert(ConvertArgs),
    /// Assign trip endpoints to zones, writing origin_id,dest_id,count
    Assign(AssignArgs),
    /// Aggregate zoned trips into an edge-list TSV
    Build(BuildArgs),
    /// Structural metrics of an edge list, as JSON
    Metrics(MetricsArgs),
    /// Edge-weight histogram of an edge list
    Dist(DistArgs),
    /// Power-law fit of the binned edge-weight distribution
    Fit(FitArgs),
    /// Log-scaled radar comparison of metric reports
    Radar(RadarArgs),
    /// Generate a synthetic grid city (trips CSV + zones GeoJSON)
    Synth(SynthArgs),
    /// Run every stage from a pipeline config
    Pipeline(PipelineArgs),
    /// Compare a monocentric and a polycentric synthetic city
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct CoordArgs {
    /// Coordinate system of the trip file
    #[arg(long, default_value = "geo")]
    coords: Coords,
    /// UTM zone, file-wide
    #[arg(long)]
    zone: Option<u8>,
    /// UTM hemisphere, file-wide
    #[arg(long)]
    hemisphere: Option<Hemisphere>,
}

impl CoordArgs {
    fn system(&self) -> Result<CoordSystem, CliError> {
        CoordSystem::from_parts(self.coords, self.zone, self.hemisphere).map_err(CliError::Input)
    }
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Coordinate system of the input; the output uses the other one.
    /// `--zone` and `--hemisphere` describe the UTM side either way.
    #[command(flatten)]
    coords: CoordArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexArg {
    Rtree,
    Grid,
}

impl From<IndexArg> for IndexKind {
    fn from(a: IndexArg) -> Self {
        match a {
            IndexArg::Rtree => IndexKind::Rtree,
            IndexArg::Grid => IndexKind::Grid,
        }
    }
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    trips: PathBuf,
    /// Zone polygons, GeoJSON FeatureCollection with an `id` property
    #[arg(long)]
    zones: PathBuf,
    /// Optional zone_id,group_id CSV aggregating zones into larger areas
    #[arg(long)]
    mapping: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    coords: CoordArgs,
    #[arg(long, value_enum, default_value = "rtree")]
    index: IndexArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
}

#[derive(Args)]
struct BuildArgs {
    /// Zoned trips CSV
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    no_self_loops: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Edge-list TSV
    #[arg(long)]
    input: PathBuf,
    /// Defaults to stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BinningArg {
    Log,
    Linear,
}

#[derive(Args)]
struct BinningArgs {
    #[arg(long, value_enum, default_value = "log")]
    binning: BinningArg,
    #[arg(long, default_value_t = DEFAULT_BINS_PER_DECADE, value_parser = clap::value_parser!(u32).range(1..))]
    bins_per_decade: u32,
}

impl BinningArgs {
    fn binning(&self) -> Binning {
        match self.binning {
            BinningArg::Log => Binning::Logarithmic {
                bins_per_decade: self.bins_per_decade,
            },
            BinningArg::Linear => Binning::Linear,
        }
    }
}

#[derive(Args)]
struct DistArgs {
    /// Edge-list TSV
    #[arg(long)]
    input: PathBuf,
    /// weight, count, pdf per distinct weight
    #[arg(long)]
    output: PathBuf,
    /// Also write the binned distribution (x_center, density)
    #[arg(long)]
    binned: Option<PathBuf>,
    #[command(flatten)]
    bins: BinningArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Edge-list TSV
    #[arg(long)]
    input: PathBuf,
    /// Defaults to stdout
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    bins: BinningArgs,
    #[arg(long, default_value_t = DEFAULT_MIN_DECADES)]
    min_decades: f64,
    #[arg(long = "min-r2", default_value_t = DEFAULT_MIN_R_SQUARED)]
    min_r2: f64,
}

#[derive(Args)]
struct RadarArgs {
    /// Metrics report JSON, as NAME=PATH or PATH (name = file stem)
    #[arg(long = "report", required = true)]
    reports: Vec<String>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// Receives trips.csv and zones.geojson
    #[arg(long)]
    output_dir: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output_dir
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the config's include_self_loops
    #[arg(long)]
    no_self_loops: bool,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 100_000)]
    trips: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the rows as JSON
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    bins: BinningArgs,
    #[arg(long, default_value_t = DEFAULT_MIN_DECADES)]
    min_decades: f64,
    #[arg(long = "min-r2", default_value_t = DEFAULT_MIN_R_SQUARED)]
    min_r2: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Internal(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.kind {
            FailureKind::Input => CliError::Input(e.to_string()),
            FailureKind::Internal => CliError::Internal(e.to_string()),
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| input_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| output_err(path, e))
}

fn read_network(path: &Path) -> Result<OdNetwork, CliError> {
    OdNetwork::read_tsv(open(path)?).map_err(|e| input_err(path, e))
}

fn write_json_to<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    match path {
        Some(p) => pipeline::write_json(p, value).map_err(Into::into),
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(out).map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}

fn convert(args: ConvertArgs) -> Result<(), CliError> {
    let system = match args.coords.coords {
        Coords::Geo => CoordSystem::Geo,
        Coords::Utm => args.coords.system()?,
    };
    let utm = Utm::default();
    let out = create(&args.output)?;
    match system {
        CoordSystem::Utm { .. } => {
            let trips = io::read_trips(open(&args.input)?, system).map_err(|e| input_err(&args.input, e))?;
            let geo = io::trips_to_geo(&trips, &utm)
                .map_err(|(i, e)| input_err(&args.input, format!("trip {}: {e}", i + 1)))?;
            io::write_geo_trips(out, &geo.trips).map_err(|e| output_err(&args.output, e))?;
            warn_half_width(geo.outside_half_width);
        }
        CoordSystem::Geo => {
            let (Some(zone), Some(hemisphere)) = (args.coords.zone, args.coords.hemisphere) else {
                return Err(CliError::Input(
                    "converting to UTM needs --zone and --hemisphere".into(),
                ));
            };
            let trips = io::read_trips(open(&args.input)?, CoordSystem::Geo)
                .map_err(|e| input_err(&args.input, e))?;
            let mut outside = 0;
            let mut rows = Vec::with_capacity(trips.len());
            for (i, t) in trips.iter().enumerate() {
                let mut project = |e: odflow::odnet::Endpoint| {
                    let odflow::odnet::Endpoint::Geo(g) = e else {
                        unreachable!("geo input")
                    };
                    if outside_zone_half_width(g.longitude, zone) {
                        outside += 1;
                    }
                    utm.project(g, zone, hemisphere)
                        .map(|u| (u.easting, u.northing))
                        .map_err(|err| input_err(&args.input, format!("trip {}: {err}", i + 1)))
                };
                rows.push((project(t.origin)?, project(t.destination)?, t.multiplicity));
            }
            io::write_trip_rows(out, rows).map_err(|e| output_err(&args.output, e))?;
            warn_half_width(outside);
        }
    }
    Ok(())
}

fn warn_half_width(n: u64) {
    if n > 0 {
        eprintln!("warning: {n} endpoints lie more than 3 degrees from the zone's central meridian");
    }
}

fn assign(args: AssignArgs) -> Result<(), CliError> {
    let system = args.coords.system()?;
    let zones = load_zones(&args.zones).map_err(|e| CliError::Input(e.to_string()))?;
    let mapping = args
        .mapping
        .as_ref()
        .map(load_mapping)
        .transpose()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let index = zone_index(zones, mapping.as_ref(), args.index.into())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let trips = io::read_trips(open(&args.trips)?, system).map_err(|e| input_err(&args.trips, e))?;
    let geo = io::trips_to_geo(&trips, &Utm::default())
        .map_err(|(i, e)| input_err(&args.trips, format!("trip {}: {e}", i + 1)))?;
    warn_half_width(geo.outside_half_width);
    let assigned = assign_trips(&index, &geo.trips, args.threads.into())
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let zones = index.zones().zones();
    let rows = geo
        .trips
        .iter()
        .zip(&assigned)
        .filter_map(|(t, a)| a.map(|(o, d)| (zones[o].id(), zones[d].id(), t.2)));
    io::write_zoned_trips(create(&args.output)?, rows).map_err(|e| output_err(&args.output, e))?;
    let dropped = assigned.iter().filter(|a| a.is_none()).count();
    eprintln!(
        "assigned {} of {} records; dropped {dropped}",
        assigned.len() - dropped,
        assigned.len()
    );
    Ok(())
}

fn build(args: BuildArgs) -> Result<(), CliError> {
    let trips = io::read_zoned_trips(open(&args.input)?).map_err(|e| input_err(&args.input, e))?;
    let net = build_network(&trips, !args.no_self_loops);
    let mut out = create(&args.output)?;
    net.write_tsv(&mut out).map_err(|e| output_err(&args.output, e))?;
    if args.no_self_loops {
        eprintln!("discarded {} self-loop trips", net.discarded_self_loops());
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<(), CliError> {
    let net = read_network(&args.input)?;
    let m: MetricsReport = compute_metrics(&net).map_err(|e| input_err(&args.input, e))?;
    let label = args.input.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    write_json_to(
        args.output.as_deref(),
        &ReportDocument {
            metrics: m,
            provenance: Provenance::new(label),
        },
    )
}

fn dist(args: DistArgs) -> Result<(), CliError> {
    let net = read_network(&args.input)?;
    let hist = weight_histogram(&net).map_err(|e| input_err(&args.input, e))?;
    hist.write_tsv(create(&args.output)?)
        .map_err(|e| output_err(&args.output, e))?;
    if let Some(path) = &args.binned {
        let binned = bin(&hist, args.bins.binning()).map_err(|e| input_err(&args.input, e))?;
        binned.write_tsv(create(path)?).map_err(|e| output_err(path, e))?;
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let net = read_network(&args.input)?;
    let binning = args.bins.binning();
    let hist = weight_histogram(&net).map_err(|e| input_err(&args.input, e))?;
    let binned = bin(&hist, binning).map_err(|e| input_err(&args.input, e))?;
    let fit = fit_power_law(&binned).map_err(|e| input_err(&args.input, e))?;
    let verdict = scale_free_verdict(&fit, args.min_decades, args.min_r2);
    eprintln!("verdict: {verdict}");
    write_json_to(
        args.output.as_deref(),
        &FitReport {
            document: FitDocument { fit, binning },
            verdict,
        },
    )
}

fn radar(args: RadarArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for spec in &args.reports {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (stem, p)
            }
        };
        let m: MetricsReport = serde_json::from_reader(open(&path)?).map_err(|e| input_err(&path, e))?;
        reports.push((name, m));
    }
    let data = radar_export(&reports).map_err(|e| CliError::Input(e.to_string()))?;
    pipeline::write_json(&args.output, &data)?;
    if let Some(svg) = &args.svg {
        let mut w = create(svg)?;
        w.write_all(data.to_svg().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| output_err(svg, e))?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg: SynthConfig = serde_json::from_reader(open(&args.config)?).map_err(|e| input_err(&args.config, e))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let city = generate_city(&cfg).map_err(|e| input_err(&args.config, e))?;
    std::fs::create_dir_all(&args.output_dir).map_err(|e| output_err(&args.output_dir, e))?;
    let trips_path = args.output_dir.join("trips.csv");
    io::write_trip_records(create(&trips_path)?, &city.trips).map_err(|e| output_err(&trips_path, e))?;
    let zones_path = args.output_dir.join("zones.geojson");
    let mut w = create(&zones_path)?;
    w.write_all(city.zones.to_geojson_string().as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| output_err(&zones_path, e))?;
    Ok(())
}

fn run_pipeline(args: PipelineArgs) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if args.no_self_loops {
        cfg.analysis.include_self_loops = false;
    }
    let summary = pipeline::run_pipeline(&cfg, args.threads.into())?;
    let c = &summary.counts;
    let verdict = match (&summary.verdict, &summary.fit_skipped) {
        (Some(v), _) => v.to_string(),
        (None, Some(reason)) => format!("no fit ({reason})"),
        (None, None) => "no fit".to_string(),
    };
    eprintln!(
        "records: {} read, {} assigned, {} dropped; N={} L={} T={}; verdict: {verdict}",
        c.records, c.assigned, c.dropped, summary.metrics.N, summary.metrics.L, summary.metrics.T
    );
    warn_half_width(c.outside_zone_half_width);
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let options = AnalysisOptions {
        binning: args.bins.binning(),
        min_decades: args.min_decades,
        min_r2: args.min_r2,
        ..AnalysisOptions::default()
    };
    let rows = conjecture_experiment(args.trips, args.seed, &options, args.threads.into())
        .map_err(|e| CliError::Input(e.to_string()))?;
    print!("{}", format_experiment(&rows));
    if let Some(path) = &args.output {
        pipeline::write_json(path, &rows)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Convert(a) => convert(a),
        Command::Assign(a) => assign(a),
        Command::Build(a) => build(a),
        Command::Metrics(a) => metrics(a),
        Command::Dist(a) => dist(a),
        Command::Fit(a) => fit(a),
        Command::Radar(a) => radar(a),
        Command::Synth(a) => synth(a),
        Command::Pipeline(a) => run_pipeline(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

use odflow::distfit::Verdict;
use odflow::io::Coords;
use odflow::geodesy::Hemisphere;
use odflow::odnet::Endpoint;
use odflow::pipeline::{
    assign_trips, build_from_assigned, run_pipeline, AnalysisOptions, FailureKind, PipelineConfig,
    Stage,
};
use odflow::synth::{generate_city, SynthConfig};
use odflow::zoning::{IndexKind, ZoneIndex};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn config(trips: PathBuf, zones: PathBuf, out: &Path) -> PipelineConfig {
    PipelineConfig {
        trips,
        zones,
        coords: Coords::Geo,
        utm_zone: None,
        hemisphere: None,
        mapping: None,
        output_dir: out.to_path_buf(),
        analysis: AnalysisOptions::default(),
    }
}

const ARTIFACTS: [&str; 7] = [
    "zoned_trips.csv",
    "edges.tsv",
    "metrics.json",
    "weight_hist.tsv",
    "binned.tsv",
    "fit.json",
    "summary.json",
];

#[test]
fn four_trips_over_two_squares() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(data("four_trips.csv"), data("two_squares.geojson"), dir.path());
    let summary = run_pipeline(&cfg, 1).unwrap();
    assert_eq!((summary.metrics.N, summary.metrics.L, summary.metrics.T), (2, 2, 4));
    assert_eq!(summary.counts.dropped, 0);
    for name in ARTIFACTS {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    assert!(!dir.path().join("trips_geo.csv").exists());
    assert_eq!(
        fs::read_to_string(dir.path().join("edges.tsv")).unwrap(),
        "A\tB\t3\nB\tA\t1\n"
    );
    // two distinct weights: too few log bins to regress on
    assert_eq!(summary.verdict, None);
    assert!(summary.fit_skipped.is_some());

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["metrics"]["T"], 4);
    assert_eq!(json["counts"]["dropped"], 0);
    assert!(json["verdict"].is_null());
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(fit["skipped"].is_string());
}

#[test]
fn fit_json_fields() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(data("sector_trips.csv"), data("sectors.geojson"), dir.path());
    cfg.mapping = Some(data("sector_groups.csv"));
    let summary = run_pipeline(&cfg, 1).unwrap();
    // weights 1, 2, 3 after aggregation
    assert_eq!(summary.verdict, Some(Verdict::InsufficientSpan));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    for key in ["alpha", "logA", "r_squared", "decades_spanned", "n_points", "binning", "verdict"] {
        assert!(fit.get(key).is_some(), "fit.json lacks {key}");
    }
    assert_eq!(fit["binning"]["scheme"], "logarithmic");
}

#[test]
fn config_file_paths_are_relative_to_it() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["four_trips.csv", "two_squares.geojson", "four_trips.json"] {
        fs::copy(data(f), dir.path().join(f)).unwrap();
    }
    let cfg = PipelineConfig::load(&dir.path().join("four_trips.json")).unwrap();
    assert_eq!(cfg.output_dir, dir.path().join("out"));
    assert!(cfg.analysis.include_self_loops);
    run_pipeline(&cfg, 1).unwrap();
    assert!(dir.path().join("out/summary.json").is_file());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"trips": "t.csv", "zones": "z.geojson", "output_dir": "o", "bins": 5}"#).unwrap();
    let err = PipelineConfig::load(&p).unwrap_err();
    assert_eq!((err.stage, err.kind), (Stage::Load, FailureKind::Input));
}

#[test]
fn off_map_trip_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(data("off_map.csv"), data("two_squares.geojson"), dir.path());
    let summary = run_pipeline(&cfg, 1).unwrap();
    assert_eq!(summary.counts.records, 4);
    assert_eq!(summary.counts.dropped, 1);
    assert_eq!(summary.counts.trips, 5);
    assert_eq!(summary.counts.trips_dropped, 1);
    assert_eq!(summary.metrics.T, 4);
    let zoned = fs::read_to_string(dir.path().join("zoned_trips.csv")).unwrap();
    assert_eq!(zoned, "origin_id,dest_id,count\nA,B,2\nA,B,1\nB,A,1\n");
}

#[test]
fn stage_errors_are_attributed() {
    let dir = tempfile::tempdir().unwrap();
    let missing = config(data("nope.csv"), data("two_squares.geojson"), dir.path());
    let err = run_pipeline(&missing, 1).unwrap_err();
    assert_eq!((err.stage, err.kind), (Stage::Load, FailureKind::Input));

    let all_off = dir.path().join("off.csv");
    fs::write(&all_off, "ox,oy,dx,dy\n10,10,11,11\n").unwrap();
    let err = run_pipeline(&config(all_off, data("two_squares.geojson"), dir.path()), 1).unwrap_err();
    assert_eq!((err.stage, err.kind), (Stage::Metrics, FailureKind::Input));

    let mut utm_without_zone = config(data("four_trips.csv"), data("two_squares.geojson"), dir.path());
    utm_without_zone.coords = Coords::Utm;
    assert_eq!(run_pipeline(&utm_without_zone, 1).unwrap_err().stage, Stage::Load);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let unwritable = config(data("four_trips.csv"), data("two_squares.geojson"), &blocker.join("out"));
    let err = run_pipeline(&unwritable, 1).unwrap_err();
    assert_eq!((err.stage, err.kind), (Stage::Write, FailureKind::Internal));
}

#[test]
fn census_sectors_keep_their_ids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(data("sector_trips.csv"), data("sectors.geojson"), dir.path());
    let summary = run_pipeline(&cfg, 1).unwrap();
    assert_eq!(summary.counts.dropped, 0);
    let zoned = fs::read_to_string(dir.path().join("zoned_trips.csv")).unwrap();
    let expected = "origin_id,dest_id,count\n\
        230440005070001,230440005070002,1\n\
        230440005070002,230440005070001,1\n\
        230440005070003,230440005070004,1\n\
        230440005070004,230440005070003,1\n\
        230440005070004,230440005070001,1\n\
        230440005070002,230440005070002,1\n\
        230440005070001,230440005070003,1\n";
    assert_eq!(zoned, expected);
    assert_eq!(summary.metrics.N, 4);
    assert_eq!(summary.metrics.L, 7);
}

#[test]
fn sectors_aggregate_into_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(data("sector_trips.csv"), data("sectors.geojson"), dir.path());
    cfg.mapping = Some(data("sector_groups.csv"));
    let summary = run_pipeline(&cfg, 1).unwrap();
    assert_eq!((summary.metrics.N, summary.metrics.T), (2, 7));
    assert_eq!(
        fs::read_to_string(dir.path().join("edges.tsv")).unwrap(),
        "AH01\tAH01\t3\nAH01\tAH02\t1\nAH02\tAH01\t1\nAH02\tAH02\t2\n"
    );
    assert_eq!(summary.inputs.mapping.as_deref(), Some("sector_groups.csv"));
}

#[test]
fn self_loops_can_be_discarded() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(data("sector_trips.csv"), data("sectors.geojson"), dir.path());
    cfg.analysis.include_self_loops = false;
    let summary = run_pipeline(&cfg, 1).unwrap();
    assert_eq!(summary.metrics.T, 6);
    assert_eq!(summary.counts.self_loop_trips_discarded, 1);
}

#[test]
fn utm_input_matches_geo_input() {
    let dir = tempfile::tempdir().unwrap();
    let utm = odflow::geodesy::Utm::default();
    let mut csv = String::from("ox,oy,dx,dy\n");
    for line in fs::read_to_string(data("sector_trips.csv")).unwrap().lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let p = |lon: f64, lat: f64| {
            let g = odflow::geodesy::GeoCoordinate::new(lat, lon).unwrap();
            utm.project(g, 24, Hemisphere::South).unwrap()
        };
        let (o, d) = (p(v[0], v[1]), p(v[2], v[3]));
        csv.push_str(&format!("{},{},{},{}\n", o.easting, o.northing, d.easting, d.northing));
    }
    let utm_trips = dir.path().join("utm.csv");
    fs::write(&utm_trips, csv).unwrap();

    let geo_out = dir.path().join("geo");
    run_pipeline(&config(data("sector_trips.csv"), data("sectors.geojson"), &geo_out), 1).unwrap();
    let utm_out = dir.path().join("utm");
    let mut cfg = config(utm_trips, data("sectors.geojson"), &utm_out);
    cfg.coords = Coords::Utm;
    cfg.utm_zone = Some(24);
    cfg.hemisphere = Some(Hemisphere::South);
    let summary = run_pipeline(&cfg, 1).unwrap();
    assert_eq!(summary.counts.outside_zone_half_width, 0);
    assert!(utm_out.join("trips_geo.csv").is_file());
    for name in ["zoned_trips.csv", "edges.tsv", "fit.json"] {
        assert_eq!(fs::read(geo_out.join(name)).unwrap(), fs::read(utm_out.join(name)).unwrap(), "{name}");
    }
}

fn synth_inputs(dir: &Path, cfg: &SynthConfig) -> (PathBuf, PathBuf) {
    let city = generate_city(cfg).unwrap();
    let trips = dir.join("trips.csv");
    odflow::io::write_trip_records(fs::File::create(&trips).unwrap(), &city.trips).unwrap();
    let zones = dir.join("zones.geojson");
    fs::write(&zones, city.zones.to_geojson_string()).unwrap();
    (trips, zones)
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn synth_pipeline_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        grid_side: 11,
        ..SynthConfig::monocentric(100_000, 2024)
    };
    let synth = SynthConfig {
        poles: vec![odflow::synth::Pole { zone: 60, amplitude: 100.0 }],
        ..synth
    };
    let (trips, zones) = synth_inputs(dir.path(), &synth);
    let mut outputs = Vec::new();
    for (run, threads) in [(0, 1), (1, 1), (2, 8)] {
        let out = dir.path().join(format!("run{run}"));
        run_pipeline(&config(trips.clone(), zones.clone(), &out), threads).unwrap();
        outputs.push(read_dir_bytes(&out));
    }
    assert_eq!(outputs[0].len(), ARTIFACTS.len());
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn generated_city_closes_through_assign_and_build() {
    let cfg = SynthConfig::polycentric(20_000, 8);
    let city = generate_city(&cfg).unwrap();
    let g = cfg.grid_side as usize;
    let mut intended: BTreeMap<(String, String), u64> = BTreeMap::new();
    for &(o, d) in &city.zone_pairs {
        let id = |z: u32| odflow::synth::zone_id(z as usize, g);
        *intended.entry((id(o), id(d))).or_default() += 1;
    }
    let trips: Vec<_> = city
        .trips
        .iter()
        .map(|t| match (t.origin, t.destination) {
            (Endpoint::Geo(o), Endpoint::Geo(d)) => (o, d, t.multiplicity),
            _ => unreachable!(),
        })
        .collect();
    for kind in [IndexKind::Rtree, IndexKind::Grid] {
        let index = ZoneIndex::build(city.zones.clone(), kind);
        let assigned = assign_trips(&index, &trips, 4).unwrap();
        assert!(assigned.iter().all(Option::is_some));
        let net = build_from_assigned(&index, &trips, &assigned, true, 4).unwrap();
        let rebuilt: BTreeMap<(String, String), u64> = net
            .edges()
            .iter()
            .map(|e| {
                (
                    (net.nodes()[e.origin].clone(), net.nodes()[e.destination].clone()),
                    e.weight,
                )
            })
            .collect();
        assert_eq!(rebuilt, intended);
    }
}

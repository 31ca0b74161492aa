//! UTM results checked against PROJ 9.5.1 output (`tests/data/utm_reference.csv`,
//! produced with pyproj's EPSG:4326 -> EPSG:326xx/327xx transformers).

use odflow::geodesy::{geographic_to_utm, utm_to_geographic, GeoCoordinate, Hemisphere, UtmCoordinate};

struct Row {
    lat: f64,
    lon: f64,
    zone: u8,
    hemisphere: Hemisphere,
    easting: f64,
    northing: f64,
}

fn reference_rows() -> Vec<Row> {
    let text = include_str!("data/utm_reference.csv");
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                lat: f[0].parse().unwrap(),
                lon: f[1].parse().unwrap(),
                zone: f[2].parse().unwrap(),
                hemisphere: f[3].parse().unwrap(),
                easting: f[4].parse().unwrap(),
                northing: f[5].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn forward_matches_proj_within_a_centimetre() {
    let rows = reference_rows();
    assert_eq!(rows.len(), 100);
    let mut worst = 0.0f64;
    for r in &rows {
        let u = geographic_to_utm(GeoCoordinate::new(r.lat, r.lon).unwrap(), None).unwrap();
        assert_eq!(u.zone, r.zone);
        assert_eq!(u.hemisphere, r.hemisphere);
        let err = (u.easting - r.easting).hypot(u.northing - r.northing);
        worst = worst.max(err);
        assert!(err < 0.01, "({}, {}): off by {err} m", r.lat, r.lon);
    }
    // fixture is rounded to 0.1 mm
    assert!(worst < 1e-3, "worst {worst}");
}

#[test]
fn inverse_matches_proj_within_a_centimetre() {
    for r in reference_rows() {
        let g = utm_to_geographic(
            UtmCoordinate::new(r.zone, r.hemisphere, r.easting, r.northing).unwrap(),
        )
        .unwrap();
        // metres per degree of latitude is at most ~111.7 km
        let dlat_m = (g.latitude - r.lat).abs() * 111_700.0;
        let dlon_m = (g.longitude - r.lon).abs() * 111_700.0 * r.lat.to_radians().cos();
        assert!(dlat_m.hypot(dlon_m) < 0.01, "({}, {})", r.lat, r.lon);
    }
}

#[test]
fn fortaleza_and_zone_23_south_vectors() {
    let u = geographic_to_utm(GeoCoordinate::new(-3.7, -38.5).unwrap(), None).unwrap();
    assert_eq!((u.zone, u.hemisphere), (24, Hemisphere::South));
    assert!((u.easting - 555_522.9892).abs() < 0.01);
    assert!((u.northing - 9_591_017.4913).abs() < 0.01);

    let g = utm_to_geographic(
        UtmCoordinate::new(23, Hemisphere::South, 333_624.1812, 7_394_647.5221).unwrap(),
    )
    .unwrap();
    assert!((g.latitude + 23.55).abs() < 1e-7);
    assert!((g.longitude + 46.63).abs() < 1e-7);
}

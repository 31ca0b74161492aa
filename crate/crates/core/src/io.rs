//! Trip and zoned-trip CSV files.
//!
//! Trip files have the header `ox,oy,dx,dy` with an optional trailing
//! `count` column (default 1). `x` is longitude or easting, `y` latitude or
//! northing; for UTM input one zone and hemisphere apply to the whole file.
//! Zoned-trip files have the header `origin_id,dest_id,count`.

use crate::geodesy::{
    outside_zone_half_width, GeoCoordinate, GeodesyError, Hemisphere, Utm, UtmCoordinate,
};
use crate::odnet::{Endpoint, TripRecord, ZonedTrip};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvFileError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header {found:?}, expected {expected}")]
    Header { found: Vec<String>, expected: String },
    #[error("line {line}: {reason}")]
    Record { line: u64, reason: String },
}

/// How trip coordinates are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    #[default]
    Geo,
    Utm,
}

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "geo" => Ok(Coords::Geo),
            "utm" => Ok(Coords::Utm),
            other => Err(format!("unknown coordinate system {other:?} (expected geo or utm)")),
        }
    }
}

/// Coordinate interpretation of a trip file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordSystem {
    Geo,
    Utm { zone: u8, hemisphere: Hemisphere },
}

impl CoordSystem {
    pub fn from_parts(
        coords: Coords,
        zone: Option<u8>,
        hemisphere: Option<Hemisphere>,
    ) -> Result<Self, String> {
        match (coords, zone, hemisphere) {
            (Coords::Geo, None, None) => Ok(CoordSystem::Geo),
            (Coords::Geo, _, _) => Err("zone/hemisphere only apply to utm coordinates".into()),
            (Coords::Utm, Some(zone), Some(hemisphere)) => {
                if !(1..=60).contains(&zone) {
                    return Err(format!("UTM zone {zone} outside [1, 60]"));
                }
                Ok(CoordSystem::Utm { zone, hemisphere })
            }
            (Coords::Utm, _, _) => Err("utm coordinates need both a zone and a hemisphere".into()),
        }
    }

    fn endpoint(&self, x: f64, y: f64) -> Result<Endpoint, GeodesyError> {
        match *self {
            CoordSystem::Geo => GeoCoordinate::new(y, x).map(Endpoint::Geo),
            CoordSystem::Utm { zone, hemisphere } => {
                UtmCoordinate::new(zone, hemisphere, x, y).map(Endpoint::Utm)
            }
        }
    }
}

/// One row of a trip file, before coordinates are validated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRow {
    pub ox: f64,
    pub oy: f64,
    pub dx: f64,
    pub dy: f64,
    pub count: u64,
    pub line: u64,
}

fn check_header(found: &csv::StringRecord, allowed: &[&[&str]]) -> Result<(), CsvFileError> {
    let found: Vec<String> = found.iter().map(|s| s.trim().to_string()).collect();
    if allowed.iter().any(|h| h.iter().eq(found.iter())) {
        return Ok(());
    }
    Err(CsvFileError::Header {
        found,
        expected: allowed
            .iter()
            .map(|h| h.join(","))
            .collect::<Vec<_>>()
            .join(" or "),
    })
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T, CsvFileError>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse().map_err(|e| CsvFileError::Record {
        line,
        reason: format!("bad {name} {raw:?}: {e}"),
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn read_trip_rows<R: Read>(input: R) -> Result<Vec<TripRow>, CsvFileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(
        rdr.headers()?,
        &[&["ox", "oy", "dx", "dy"], &["ox", "oy", "dx", "dy", "count"]],
    )?;
    let with_count = rdr.headers()?.len() == 5;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let count = if with_count {
            field(&rec, 4, "count", line)?
        } else {
            1
        };
        if count == 0 {
            return Err(CsvFileError::Record {
                line,
                reason: "count must be positive".into(),
            });
        }
        let row = TripRow {
            ox: field(&rec, 0, "ox", line)?,
            oy: field(&rec, 1, "oy", line)?,
            dx: field(&rec, 2, "dx", line)?,
            dy: field(&rec, 3, "dy", line)?,
            count,
            line,
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a trip file and validates every coordinate under `system`.
pub fn read_trips<R: Read>(input: R, system: CoordSystem) -> Result<Vec<TripRecord>, CsvFileError> {
    read_trip_rows(input)?
        .into_iter()
        .map(|row| {
            let bad = |e: GeodesyError| CsvFileError::Record {
                line: row.line,
                reason: e.to_string(),
            };
            Ok(TripRecord {
                origin: system.endpoint(row.ox, row.oy).map_err(bad)?,
                destination: system.endpoint(row.dx, row.dy).map_err(bad)?,
                multiplicity: row.count,
            })
        })
        .collect()
}

/// Geographic endpoints plus how many of them sit more than the zone
/// half-width away from their UTM zone's central meridian.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoTrips {
    pub trips: Vec<(GeoCoordinate, GeoCoordinate, u64)>,
    pub outside_half_width: u64,
}

pub fn trips_to_geo(trips: &[TripRecord], utm: &Utm) -> Result<GeoTrips, (usize, GeodesyError)> {
    let mut outside = 0;
    let mut out = Vec::with_capacity(trips.len());
    for (i, t) in trips.iter().enumerate() {
        let mut conv = |e: Endpoint| -> Result<GeoCoordinate, (usize, GeodesyError)> {
            let g = e.to_geo(utm).map_err(|err| (i, err))?;
            if let Endpoint::Utm(u) = e {
                if outside_zone_half_width(g.longitude, u.zone) {
                    outside += 1;
                }
            }
            Ok(g)
        };
        let o = conv(t.origin)?;
        let d = conv(t.destination)?;
        out.push((o, d, t.multiplicity));
    }
    Ok(GeoTrips {
        trips: out,
        outside_half_width: outside,
    })
}

/// Writes `ox,oy,dx,dy,count` rows.
pub fn write_trip_rows<W: Write>(
    out: W,
    rows: impl IntoIterator<Item = ((f64, f64), (f64, f64), u64)>,
) -> Result<(), CsvFileError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ox", "oy", "dx", "dy", "count"])?;
    for ((ox, oy), (dx, dy), count) in rows {
        w.write_record([
            ox.to_string(),
            oy.to_string(),
            dx.to_string(),
            dy.to_string(),
            count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_geo_trips<W: Write>(
    out: W,
    trips: &[(GeoCoordinate, GeoCoordinate, u64)],
) -> Result<(), CsvFileError> {
    write_trip_rows(
        out,
        trips.iter().map(|(o, d, c)| {
            ((o.longitude, o.latitude), (d.longitude, d.latitude), *c)
        }),
    )
}

pub fn write_trip_records<W: Write>(out: W, trips: &[TripRecord]) -> Result<(), CsvFileError> {
    let xy = |e: Endpoint| match e {
        Endpoint::Geo(g) => (g.longitude, g.latitude),
        Endpoint::Utm(u) => (u.easting, u.northing),
    };
    write_trip_rows(
        out,
        trips.iter().map(|t| (xy(t.origin), xy(t.destination), t.multiplicity)),
    )
}

pub fn read_zoned_trips<R: Read>(input: R) -> Result<Vec<ZonedTrip>, CsvFileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(rdr.headers()?, &[&["origin_id", "dest_id", "count"]])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let count: u64 = field(&rec, 2, "count", line)?;
        if count == 0 {
            return Err(CsvFileError::Record {
                line,
                reason: "count must be positive".into(),
            });
        }
        out.push(ZonedTrip::new(&rec[0], &rec[1], count));
    }
    Ok(out)
}

pub fn write_zoned_trips<'a, W: Write>(
    out: W,
    trips: impl IntoIterator<Item = (&'a str, &'a str, u64)>,
) -> Result<(), CsvFileError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["origin_id", "dest_id", "count"])?;
    for (o, d, c) in trips {
        w.write_record([o, d, &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_column_is_optional() {
        let a = read_trip_rows("ox,oy,dx,dy\n0.5,0.5,1.5,0.5\n".as_bytes()).unwrap();
        assert_eq!(a[0].count, 1);
        assert_eq!(a[0].line, 2);
        let b = read_trip_rows("ox,oy,dx,dy,count\n0.5,0.5,1.5,0.5,7\n".as_bytes()).unwrap();
        assert_eq!(b[0].count, 7);
        assert_eq!((b[0].dx, b[0].dy), (1.5, 0.5));
    }

    #[test]
    fn header_and_value_errors() {
        assert!(matches!(
            read_trip_rows("lat,lon,dx,dy\n".as_bytes()),
            Err(CsvFileError::Header { .. })
        ));
        let err = read_trip_rows("ox,oy,dx,dy\n1,2,3,4\n1,x,3,4\n".as_bytes()).unwrap_err();
        match err {
            CsvFileError::Record { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
        assert!(read_trip_rows("ox,oy,dx,dy,count\n1,2,3,4,0\n".as_bytes()).is_err());
        assert!(read_trips("ox,oy,dx,dy\n0,95,0,0\n".as_bytes(), CoordSystem::Geo).is_err());
    }

    #[test]
    fn x_is_longitude() {
        let t = read_trips("ox,oy,dx,dy\n-38.5,-3.7,10,20\n".as_bytes(), CoordSystem::Geo).unwrap();
        let Endpoint::Geo(o) = t[0].origin else { panic!() };
        assert_eq!((o.longitude, o.latitude), (-38.5, -3.7));
    }

    #[test]
    fn utm_file_round_trips_through_geo() {
        let sys = CoordSystem::from_parts(Coords::Utm, Some(24), Some(Hemisphere::South)).unwrap();
        let t = read_trips(
            "ox,oy,dx,dy,count\n555522.9892,9591017.4913,400000,9500000,2\n".as_bytes(),
            sys,
        )
        .unwrap();
        let geo = trips_to_geo(&t, &Utm::default()).unwrap();
        let (o, _, c) = geo.trips[0];
        assert!((o.latitude + 3.7).abs() < 1e-7 && (o.longitude + 38.5).abs() < 1e-7);
        assert_eq!(c, 2);
        assert_eq!(geo.outside_half_width, 0);
    }

    #[test]
    fn coord_system_needs_consistent_flags() {
        assert!(CoordSystem::from_parts(Coords::Utm, Some(24), None).is_err());
        assert!(CoordSystem::from_parts(Coords::Utm, Some(61), Some(Hemisphere::North)).is_err());
        assert!(CoordSystem::from_parts(Coords::Geo, Some(24), None).is_err());
        assert_eq!(CoordSystem::from_parts(Coords::Geo, None, None), Ok(CoordSystem::Geo));
    }

    #[test]
    fn zoned_trips_round_trip() {
        let mut buf = Vec::new();
        write_zoned_trips(&mut buf, [("a", "b", 2), ("b", "a", 1)]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "origin_id,dest_id,count\na,b,2\nb,a,1\n");
        let back = read_zoned_trips(buf.as_slice()).unwrap();
        assert_eq!(back, vec![ZonedTrip::new("a", "b", 2), ZonedTrip::new("b", "a", 1)]);
    }
}

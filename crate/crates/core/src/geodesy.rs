//! Geographic <-> UTM conversion on a reference ellipsoid.
//!
//! The projection uses the Krüger series to sixth order in the third
//! flattening `n`, which keeps the in-zone error well below a millimetre.
//! The inverse needs a short Newton iteration to recover the geodetic
//! latitude from the conformal latitude.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// UTM scale factor on the central meridian.
pub const UTM_SCALE_FACTOR: f64 = 0.9996;
pub const UTM_FALSE_EASTING: f64 = 500_000.0;
pub const UTM_FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;
/// Latitude limit of the UTM validity band, in degrees.
pub const UTM_MAX_LATITUDE: f64 = 84.0;
/// Half width of a UTM zone, in degrees of longitude.
pub const UTM_ZONE_HALF_WIDTH: f64 = 3.0;

const MAX_NEWTON_ITERATIONS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} outside the UTM band |lat| <= 84")]
    OutOfBand(f64),
    #[error("zone override {requested} is not within one zone of the natural zone {natural}")]
    BadZoneOverride { requested: u8, natural: u8 },
    #[error("invalid geographic coordinate: {0}")]
    InvalidGeographic(String),
    #[error("invalid UTM coordinate: {0}")]
    InvalidUtm(String),
    #[error("inverse latitude iteration did not converge (tau' = {0})")]
    NumericalDivergence(f64),
}

/// A point in geographic degrees. Longitude is kept in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoordinate {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoCoordinate {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, GeodesyError> {
        if !latitude.is_finite() || !longitude.is_finite() {
            return Err(GeodesyError::InvalidGeographic(format!(
                "non-finite value ({latitude}, {longitude})"
            )));
        }
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(GeodesyError::InvalidGeographic(format!(
                "latitude {latitude} outside [-90, 90]"
            )));
        }
        Ok(Self {
            latitude,
            longitude: normalize_longitude(longitude),
        })
    }
}

/// Wraps any finite longitude into `[-180, 180)`.
pub fn normalize_longitude(longitude: f64) -> f64 {
    if (-180.0..180.0).contains(&longitude) {
        return longitude;
    }
    let wrapped = (longitude + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    North,
    South,
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hemisphere::North => f.write_str("north"),
            Hemisphere::South => f.write_str("south"),
        }
    }
}

impl std::str::FromStr for Hemisphere {
    type Err = GeodesyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "north" | "n" => Ok(Hemisphere::North),
            "south" | "s" => Ok(Hemisphere::South),
            other => Err(GeodesyError::InvalidUtm(format!("unknown hemisphere {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtmCoordinate {
    pub zone: u8,
    pub hemisphere: Hemisphere,
    pub easting: f64,
    pub northing: f64,
}

impl UtmCoordinate {
    pub fn new(
        zone: u8,
        hemisphere: Hemisphere,
        easting: f64,
        northing: f64,
    ) -> Result<Self, GeodesyError> {
        if !(1..=60).contains(&zone) {
            return Err(GeodesyError::InvalidUtm(format!("zone {zone} outside [1, 60]")));
        }
        if !(easting > 0.0 && easting < 1_000_000.0) {
            return Err(GeodesyError::InvalidUtm(format!(
                "easting {easting} outside (0, 1000000)"
            )));
        }
        if !(0.0..=10_000_000.0).contains(&northing) {
            return Err(GeodesyError::InvalidUtm(format!(
                "northing {northing} outside [0, 10000000]"
            )));
        }
        Ok(Self {
            zone,
            hemisphere,
            easting,
            northing,
        })
    }
}

/// Reference ellipsoid given by semi-major axis and flattening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub semi_major_axis: f64,
    pub flattening: f64,
}

impl Ellipsoid {
    pub const WGS84: Ellipsoid = Ellipsoid {
        semi_major_axis: 6_378_137.0,
        flattening: 1.0 / 298.257_223_563,
    };

    /// GRS80, the ellipsoid of SIRGAS2000.
    pub const GRS80: Ellipsoid = Ellipsoid {
        semi_major_axis: 6_378_137.0,
        flattening: 1.0 / 298.257_222_101,
    };
}

impl Default for Ellipsoid {
    fn default() -> Self {
        Ellipsoid::WGS84
    }
}

/// Natural UTM zone for a longitude: `floor((lon + 180) / 6) + 1`, clamped to `[1, 60]`.
pub fn utm_zone_for(longitude: f64) -> u8 {
    let zone = ((longitude + 180.0) / 6.0).floor() + 1.0;
    zone.clamp(1.0, 60.0) as u8
}

/// Central meridian of a zone, in degrees.
pub fn central_meridian(zone: u8) -> f64 {
    f64::from(zone) * 6.0 - 183.0
}

/// Longitude offset from the zone's central meridian, wrapped to `[-180, 180)`.
pub fn offset_from_central_meridian(longitude: f64, zone: u8) -> f64 {
    normalize_longitude(longitude - central_meridian(zone))
}

/// True if the point lies beyond the nominal ±3° half width of `zone`.
pub fn outside_zone_half_width(longitude: f64, zone: u8) -> bool {
    offset_from_central_meridian(longitude, zone).abs() > UTM_ZONE_HALF_WIDTH
}

/// Transverse Mercator projection with precomputed Krüger coefficients.
#[derive(Debug, Clone)]
pub struct TransverseMercator {
    ellipsoid: Ellipsoid,
    scale: f64,
    eccentricity: f64,
    e2m: f64,
    /// Rectifying radius times the scale factor.
    scaled_radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

impl TransverseMercator {
    pub fn new(ellipsoid: Ellipsoid, scale: f64) -> Self {
        let f = ellipsoid.flattening;
        let e2 = f * (2.0 - f);
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;

        let radius = ellipsoid.semi_major_axis / (1.0 + n)
            * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);

        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1983433.0 * n6 / 1935360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167603.0 * n6 / 181440.0,
            49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
            34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
            212378941.0 * n6 / 319334400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1118711.0 * n6 / 3870720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
            4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
            20648693.0 * n6 / 638668800.0,
        ];

        Self {
            ellipsoid,
            scale,
            eccentricity: e2.sqrt(),
            e2m: 1.0 - e2,
            scaled_radius: scale * radius,
            alpha,
            beta,
        }
    }

    pub fn utm(ellipsoid: Ellipsoid) -> Self {
        Self::new(ellipsoid, UTM_SCALE_FACTOR)
    }

    pub fn ellipsoid(&self) -> Ellipsoid {
        self.ellipsoid
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Conformal-latitude tangent tau' from geodetic tangent tau.
    fn taup(&self, tau: f64) -> f64 {
        let e = self.eccentricity;
        let tau1 = tau.hypot(1.0);
        let sig = (e * (e * tau / tau1).atanh()).sinh();
        tau * sig.hypot(1.0) - sig * tau1
    }

    /// Inverts `taup` by Newton's method.
    fn tauf(&self, taup: f64) -> Result<f64, GeodesyError> {
        let tol = f64::EPSILON.sqrt() / 10.0;
        let mut tau = taup / self.e2m;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let taupa = self.taup(tau);
            let dtau = (taup - taupa) * (1.0 + self.e2m * tau * tau)
                / (self.e2m * tau.hypot(1.0) * taupa.hypot(1.0));
            tau += dtau;
            if !tau.is_finite() {
                break;
            }
            // quadratic convergence: one more step would be below machine precision
            if dtau.abs() < tol * tau.abs().max(1.0) {
                return Ok(tau);
            }
        }
        Err(GeodesyError::NumericalDivergence(taup))
    }

    /// Projects a point to `(x, y)` in metres relative to the central meridian
    /// and the equator (no false easting/northing).
    pub fn forward(&self, latitude: f64, longitude_offset: f64) -> (f64, f64) {
        let phi = latitude.to_radians();
        let lam = longitude_offset.to_radians();
        let tau = phi.tan();
        let taup = if latitude.abs() == 90.0 {
            tau.signum() * f64::INFINITY
        } else {
            self.taup(tau)
        };
        let (xip, etap) = if taup.is_infinite() {
            (taup.signum() * std::f64::consts::FRAC_PI_2, 0.0)
        } else {
            let clam = lam.cos();
            (taup.atan2(clam), (lam.sin() / taup.hypot(clam)).asinh())
        };

        let mut xi = xip;
        let mut eta = etap;
        for (j, a) in self.alpha.iter().enumerate() {
            let k = 2.0 * (j as f64 + 1.0);
            xi += a * (k * xip).sin() * (k * etap).cosh();
            eta += a * (k * xip).cos() * (k * etap).sinh();
        }
        (self.scaled_radius * eta, self.scaled_radius * xi)
    }

    /// Inverse of [`forward`](Self::forward): returns `(latitude, longitude_offset)` in degrees.
    pub fn inverse(&self, x: f64, y: f64) -> Result<(f64, f64), GeodesyError> {
        let xi = y / self.scaled_radius;
        let eta = x / self.scaled_radius;
        let mut xip = xi;
        let mut etap = eta;
        for (j, b) in self.beta.iter().enumerate() {
            let k = 2.0 * (j as f64 + 1.0);
            xip -= b * (k * xi).sin() * (k * eta).cosh();
            etap -= b * (k * xi).cos() * (k * eta).sinh();
        }
        let s = etap.sinh();
        let c = xip.cos().max(0.0);
        let r = s.hypot(c);
        let (latitude, longitude) = if r != 0.0 {
            let taup = xip.sin() / r;
            let tau = self.tauf(taup)?;
            (tau.atan().to_degrees(), s.atan2(c).to_degrees())
        } else {
            (90.0_f64.copysign(xip), 0.0)
        };
        if !latitude.is_finite() || !longitude.is_finite() {
            return Err(GeodesyError::NumericalDivergence(xip));
        }
        Ok((latitude, longitude))
    }
}

/// UTM conversions on a fixed ellipsoid.
#[derive(Debug, Clone)]
pub struct Utm {
    tm: TransverseMercator,
}

impl Default for Utm {
    fn default() -> Self {
        Self::new(Ellipsoid::WGS84)
    }
}

impl Utm {
    pub fn new(ellipsoid: Ellipsoid) -> Self {
        Self {
            tm: TransverseMercator::utm(ellipsoid),
        }
    }

    pub fn ellipsoid(&self) -> Ellipsoid {
        self.tm.ellipsoid()
    }

    /// Projects into the natural zone, or into `zone_override` when it is
    /// the natural zone or one of its neighbours.
    pub fn to_utm(
        &self,
        p: GeoCoordinate,
        zone_override: Option<u8>,
    ) -> Result<UtmCoordinate, GeodesyError> {
        if p.latitude.abs() > UTM_MAX_LATITUDE {
            return Err(GeodesyError::OutOfBand(p.latitude));
        }
        let natural = utm_zone_for(p.longitude);
        let zone = match zone_override {
            None => natural,
            Some(z) => {
                if !(1..=60).contains(&z) || zone_distance(z, natural) > 1 {
                    return Err(GeodesyError::BadZoneOverride {
                        requested: z,
                        natural,
                    });
                }
                z
            }
        };
        let hemisphere = if p.latitude < 0.0 {
            Hemisphere::South
        } else {
            Hemisphere::North
        };
        self.project(p, zone, hemisphere)
    }

    /// Projects with an explicit zone and hemisphere, for file-wide UTM
    /// conventions. Fails if the result violates the UTM coordinate ranges.
    pub fn project(
        &self,
        p: GeoCoordinate,
        zone: u8,
        hemisphere: Hemisphere,
    ) -> Result<UtmCoordinate, GeodesyError> {
        if p.latitude.abs() > UTM_MAX_LATITUDE {
            return Err(GeodesyError::OutOfBand(p.latitude));
        }
        if !(1..=60).contains(&zone) {
            return Err(GeodesyError::InvalidUtm(format!("zone {zone} outside [1, 60]")));
        }
        let (x, y) = self
            .tm
            .forward(p.latitude, offset_from_central_meridian(p.longitude, zone));
        let northing = match hemisphere {
            Hemisphere::North => y,
            Hemisphere::South => y + UTM_FALSE_NORTHING_SOUTH,
        };
        UtmCoordinate::new(zone, hemisphere, x + UTM_FALSE_EASTING, northing)
    }

    pub fn to_geographic(&self, p: UtmCoordinate) -> Result<GeoCoordinate, GeodesyError> {
        let p = UtmCoordinate::new(p.zone, p.hemisphere, p.easting, p.northing)?;
        let y = match p.hemisphere {
            Hemisphere::North => p.northing,
            Hemisphere::South => p.northing - UTM_FALSE_NORTHING_SOUTH,
        };
        let (latitude, dlon) = self.tm.inverse(p.easting - UTM_FALSE_EASTING, y)?;
        GeoCoordinate::new(latitude, central_meridian(p.zone) + dlon)
    }
}

fn zone_distance(a: u8, b: u8) -> u8 {
    let d = a.abs_diff(b);
    d.min(60 - d)
}

/// [`Utm::to_utm`] on WGS84.
pub fn geographic_to_utm(
    p: GeoCoordinate,
    zone_override: Option<u8>,
) -> Result<UtmCoordinate, GeodesyError> {
    Utm::default().to_utm(p, zone_override)
}

/// [`Utm::to_geographic`] on WGS84.
pub fn utm_to_geographic(p: UtmCoordinate) -> Result<GeoCoordinate, GeodesyError> {
    Utm::default().to_geographic(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geo(lat: f64, lon: f64) -> GeoCoordinate {
        GeoCoordinate::new(lat, lon).unwrap()
    }

    #[test]
    fn zone_formula_examples() {
        assert_eq!(utm_zone_for(-180.0), 1);
        assert_eq!(utm_zone_for(-38.5), 24);
        assert_eq!(utm_zone_for(0.0), 31);
        assert_eq!(utm_zone_for(179.999), 60);
        assert_eq!(utm_zone_for(180.0), 60);
    }

    #[test]
    fn zone_intervals_are_half_open() {
        for zone in 1..=60u8 {
            let west = -180.0 + 6.0 * f64::from(zone - 1);
            assert_eq!(utm_zone_for(west), zone);
            assert_eq!(utm_zone_for(west + 5.999_999), zone);
            assert_eq!(central_meridian(zone), west + 3.0);
        }
    }

    #[test]
    fn longitude_normalization() {
        assert_eq!(normalize_longitude(180.0), -180.0);
        assert_eq!(normalize_longitude(-180.0), -180.0);
        assert_eq!(normalize_longitude(190.0), -170.0);
        assert_eq!(normalize_longitude(-1e-20), -1e-20);
        assert!(GeoCoordinate::new(91.0, 0.0).is_err());
        assert!(GeoCoordinate::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn central_meridian_on_equator() {
        let u = geographic_to_utm(geo(0.0, -39.0), None).unwrap();
        assert_eq!(u.zone, 24);
        assert_eq!(u.hemisphere, Hemisphere::North);
        assert!((u.easting - 500_000.0).abs() < 1e-9);
        assert!(u.northing.abs() < 1e-9);

        let back =
            utm_to_geographic(UtmCoordinate::new(24, Hemisphere::North, 500_000.0, 0.0).unwrap())
                .unwrap();
        assert!(back.latitude.abs() < 1e-12);
        assert!((back.longitude + 39.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_band_and_bad_override() {
        assert_eq!(
            geographic_to_utm(geo(84.5, 10.0), None),
            Err(GeodesyError::OutOfBand(84.5))
        );
        assert!(matches!(
            geographic_to_utm(geo(-3.7, -38.5), Some(26)),
            Err(GeodesyError::BadZoneOverride { requested: 26, natural: 24 })
        ));
        assert!(geographic_to_utm(geo(-3.7, -41.5), Some(23)).is_ok());
        assert!(geographic_to_utm(geo(-3.7, -36.5), Some(25)).is_ok());
        // a legal override can still push the easting out of range
        assert!(matches!(
            geographic_to_utm(geo(-3.7, -38.5), Some(23)),
            Err(GeodesyError::InvalidUtm(_))
        ));
        // zones 60 and 1 are neighbours across the antimeridian
        assert!(geographic_to_utm(geo(10.0, 179.0), Some(1)).is_ok());
    }

    #[test]
    fn invalid_utm_rejected() {
        assert!(UtmCoordinate::new(0, Hemisphere::North, 500_000.0, 0.0).is_err());
        assert!(UtmCoordinate::new(61, Hemisphere::North, 500_000.0, 0.0).is_err());
        assert!(UtmCoordinate::new(10, Hemisphere::North, 0.0, 0.0).is_err());
        assert!(UtmCoordinate::new(10, Hemisphere::North, 500_000.0, -1.0).is_err());
        assert!(UtmCoordinate::new(10, Hemisphere::North, 500_000.0, 10_000_001.0).is_err());
    }

    #[test]
    fn off_zone_points_are_flagged() {
        assert!(!outside_zone_half_width(-38.5, 24));
        assert!(outside_zone_half_width(-35.5, 24));
        assert!(outside_zone_half_width(179.0, 1));
        assert!(!outside_zone_half_width(-179.0, 1));
    }

    #[test]
    fn grs80_differs_from_wgs84_by_less_than_a_millimetre() {
        let p = geo(-3.7, -38.5);
        let a = Utm::new(Ellipsoid::WGS84).to_utm(p, None).unwrap();
        let b = Utm::new(Ellipsoid::GRS80).to_utm(p, None).unwrap();
        assert!((a.easting - b.easting).abs() < 1e-3);
        assert!((a.northing - b.northing).abs() < 1e-3);
        assert!(a.northing != b.northing);
    }

    #[test]
    fn round_trip_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let utm = Utm::default();
        for _ in 0..1000 {
            let lat = rng.random_range(-84.0..=84.0);
            let zone = rng.random_range(1..=60u8);
            let lon = central_meridian(zone) + rng.random_range(-3.0..3.0);
            let p = geo(lat, lon);
            let u = utm.to_utm(p, Some(zone)).unwrap();
            let q = utm.to_geographic(u).unwrap();
            assert!((q.latitude - p.latitude).abs() < 1e-8, "{p:?} -> {q:?}");
            assert!(normalize_longitude(q.longitude - p.longitude).abs() < 1e-8);
        }
    }

    #[test]
    fn corrupt_input_does_not_panic() {
        // a point far outside any sensible zone still yields a finite answer or an error
        let r = utm_to_geographic(UtmCoordinate {
            zone: 24,
            hemisphere: Hemisphere::North,
            easting: 999_999.0,
            northing: 9_999_999.0,
        });
        if let Ok(g) = r {
            assert!(g.latitude.is_finite());
        }
    }

    proptest! {
        #[test]
        fn northing_increases_with_latitude(lat in -83.9f64..83.9, dlon in -3.0f64..3.0) {
            let utm = Utm::default();
            let lon = -39.0 + dlon;
            let hemi = if lat < 0.0 { Hemisphere::South } else { Hemisphere::North };
            let a = utm.project(geo(lat, lon), 24, hemi).unwrap();
            let b_lat = lat + 0.05;
            if (b_lat < 0.0) == (lat < 0.0) {
                let b = utm.project(geo(b_lat, lon), 24, hemi).unwrap();
                prop_assert!(b.northing > a.northing);
            }
        }

        #[test]
        fn easting_increases_with_longitude(lat in -84.0f64..84.0, dlon in -3.0f64..2.9) {
            let utm = Utm::default();
            let hemi = if lat < 0.0 { Hemisphere::South } else { Hemisphere::North };
            let a = utm.project(geo(lat, -39.0 + dlon), 24, hemi).unwrap();
            let b = utm.project(geo(lat, -39.0 + dlon + 0.1), 24, hemi).unwrap();
            prop_assert!(b.easting > a.easting);
        }
    }
}

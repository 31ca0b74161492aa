//! Synthetic grid cities with gravity-style trip generation.
//!
//! A city is a `g x g` grid of unit cells; cell `(r, c)` spans longitudes
//! `[c, c + 1]` and latitudes `[r, r + 1]` and has id `"r_c"`. Zone index
//! `i = r * g + c`.
//!
//! Destination choice from origin `i`:
//!
//! ```text
//! a_j      = eps + sum_p A_p * exp(-d(j, p) / lambda)
//! P(j | i) = a_j / (1 + d(i, j))^beta   (normalized over j)
//! ```
//!
//! with `d` the Euclidean distance between cell centres in cell units.
//! Origins are uniform over cells. Randomness comes from ChaCha8 seeded with
//! `seed` via `seed_from_u64`; draws are consumed in a fixed order (all
//! origins, then destinations grouped by ascending origin in trip order,
//! then endpoint offsets in trip order), so output depends only on the config.

use crate::geodesy::GeoCoordinate;
use crate::odnet::{Endpoint, TripRecord};
use crate::zoning::{Polygon, Zone, ZoneSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Endpoints stay this far (in degrees) from cell borders.
const EDGE_MARGIN: f64 = 1e-9;
const MAX_GRID_SIDE: u32 = 90;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    /// Zone index `r * g + c`.
    pub zone: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub grid_side: u32,
    #[serde(default)]
    pub poles: Vec<Pole>,
    /// Pole attractiveness decay length, in cells.
    pub decay_length: f64,
    /// Gravity deceleration exponent.
    pub beta: f64,
    pub base_attractiveness: f64,
    pub trips: u64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Domain(m));
        if self.grid_side == 0 || self.grid_side > MAX_GRID_SIDE {
            return err(format!(
                "grid_side {} outside [1, {MAX_GRID_SIDE}]",
                self.grid_side
            ));
        }
        let n = self.zone_count() as u32;
        for p in &self.poles {
            if p.zone >= n {
                return err(format!("pole zone {} outside grid of {n} zones", p.zone));
            }
            if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
                return err(format!("pole amplitude {} must be >= 0", p.amplitude));
            }
        }
        if !self.poles.is_empty() && !(self.decay_length.is_finite() && self.decay_length > 0.0) {
            return err(format!("decay_length {} must be > 0", self.decay_length));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return err(format!("beta {} must be >= 0", self.beta));
        }
        if !(self.base_attractiveness.is_finite() && self.base_attractiveness > 0.0) {
            return err(format!(
                "base_attractiveness {} must be > 0",
                self.base_attractiveness
            ));
        }
        Ok(())
    }

    pub fn zone_count(&self) -> usize {
        (self.grid_side as usize).pow(2)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// One strong pole in the centre cell.
    pub fn monocentric(trips: u64, seed: u64) -> Self {
        let g = 21;
        Self {
            grid_side: g,
            poles: vec![Pole {
                zone: (g / 2) * g + g / 2,
                amplitude: 900.0,
            }],
            decay_length: 2.0,
            beta: 1.5,
            base_attractiveness: 1.0,
            trips,
            seed,
        }
    }

    /// Nine equal poles on a 3 x 3 lattice with the same total amplitude.
    pub fn polycentric(trips: u64, seed: u64) -> Self {
        let g = 21;
        let poles = [3, 10, 17]
            .iter()
            .flat_map(|&r| [3, 10, 17].map(|c| Pole {
                zone: r * g + c,
                amplitude: 100.0,
            }))
            .collect();
        Self {
            poles,
            ..Self::monocentric(trips, seed)
        }
    }
}

fn cell_center(zone: usize, g: usize) -> (f64, f64) {
    ((zone % g) as f64 + 0.5, (zone / g) as f64 + 0.5)
}

fn distance(a: usize, b: usize, g: usize) -> f64 {
    let (ax, ay) = cell_center(a, g);
    let (bx, by) = cell_center(b, g);
    (ax - bx).hypot(ay - by)
}

pub fn zone_id(zone: usize, g: usize) -> String {
    format!("{}_{}", zone / g, zone % g)
}

/// `a_j` for every zone.
pub fn attractiveness(config: &SynthConfig) -> Result<Vec<f64>, SynthError> {
    config.validate()?;
    let g = config.grid_side as usize;
    Ok((0..config.zone_count())
        .map(|j| {
            config.base_attractiveness
                + config
                    .poles
                    .iter()
                    .map(|p| p.amplitude * (-distance(j, p.zone as usize, g) / config.decay_length).exp())
                    .sum::<f64>()
        })
        .collect())
}

fn unnormalized(attr: &[f64], origin: usize, g: usize, beta: f64) -> Vec<f64> {
    attr.iter()
        .enumerate()
        .map(|(j, a)| {
            if beta == 0.0 {
                *a
            } else {
                a / (1.0 + distance(origin, j, g)).powf(beta)
            }
        })
        .collect()
}

/// `P(j | origin)` for all zones `j`.
pub fn destination_probabilities(config: &SynthConfig, origin: usize) -> Result<Vec<f64>, SynthError> {
    let attr = attractiveness(config)?;
    if origin >= attr.len() {
        return Err(SynthError::Domain(format!(
            "origin {origin} outside grid of {} zones",
            attr.len()
        )));
    }
    let w = unnormalized(&attr, origin, config.grid_side as usize, config.beta);
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Unit-cell grid zones, ids `"r_c"`, in zone-index order.
pub fn grid_zones(rows: u32, cols: u32) -> ZoneSet {
    let zones = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (x, y) = (f64::from(c), f64::from(r));
            Zone::new(
                format!("{r}_{c}"),
                vec![Polygon::rectangle([x, y], [x + 1.0, y + 1.0])],
            )
            .expect("rectangle zone")
        })
        .collect();
    ZoneSet::new(zones).expect("grid ids are unique")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub zones: ZoneSet,
    pub trips: Vec<TripRecord>,
    /// `(origin zone, destination zone)` per trip, parallel to `trips`.
    pub zone_pairs: Vec<(u32, u32)>,
}

pub fn generate_city(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    let attr = attractiveness(config)?;
    let g = config.grid_side as usize;
    let n = attr.len();
    let trips = usize::try_from(config.trips)
        .map_err(|_| SynthError::Domain(format!("too many trips: {}", config.trips)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let origins: Vec<u32> = (0..trips).map(|_| rng.random_range(0..n as u32)).collect();

    let mut by_origin: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, &o) in origins.iter().enumerate() {
        by_origin[o as usize].push(t);
    }
    let mut destinations = vec![0u32; trips];
    for (origin, members) in by_origin.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut cdf = unnormalized(&attr, origin, g, config.beta);
        let mut acc = 0.0;
        for v in cdf.iter_mut() {
            acc += *v;
            *v = acc;
        }
        for &t in members {
            let u = rng.random::<f64>() * acc;
            let j = cdf.partition_point(|&c| c <= u).min(n - 1);
            destinations[t] = j as u32;
        }
    }

    let mut point_in = |zone: u32| -> GeoCoordinate {
        let (x0, y0) = ((zone as usize % g) as f64, (zone as usize / g) as f64);
        let span = 1.0 - 2.0 * EDGE_MARGIN;
        let dx = EDGE_MARGIN + span * rng.random::<f64>();
        let dy = EDGE_MARGIN + span * rng.random::<f64>();
        GeoCoordinate::new(y0 + dy, x0 + dx).expect("grid cells lie within valid latitudes")
    };
    let mut records = Vec::with_capacity(trips);
    for t in 0..trips {
        let o = point_in(origins[t]);
        let d = point_in(destinations[t]);
        records.push(TripRecord {
            origin: Endpoint::Geo(o),
            destination: Endpoint::Geo(d),
            multiplicity: 1,
        });
    }

    Ok(SynthOutput {
        zones: grid_zones(config.grid_side, config.grid_side),
        trips: records,
        zone_pairs: origins.into_iter().zip(destinations).collect(),
    })
}

//! Zone polygons, spatial index and point-to-zone assignment.
//!
//! Containment is planar in (longitude, latitude) and follows the even-odd
//! rule over a polygon's rings. A point on a ring counts as inside, so a
//! point on an edge shared by two zones is contained by both; the zone with
//! the lexicographically smallest id wins.

use crate::geodesy::GeoCoordinate;
use geojson::{GeoJson, Value};
use serde::Deserialize;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// `(longitude, latitude)`.
pub type Position = [f64; 2];

#[derive(Debug, Error)]
pub enum ZoningError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed zone file: {0}")]
    Parse(String),
    #[error("feature {feature}: {reason}")]
    Geometry { feature: String, reason: String },
    #[error("zone {zone} is claimed by groups {first:?} and {second:?}")]
    Conflict {
        zone: String,
        first: String,
        second: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Position,
    pub max: Position,
}

impl BoundingBox {
    fn of_points<'a>(points: impl IntoIterator<Item = &'a Position>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = BoundingBox {
            min: first,
            max: first,
        };
        for p in it {
            b.min[0] = b.min[0].min(p[0]);
            b.min[1] = b.min[1].min(p[1]);
            b.max[0] = b.max[0].max(p[0]);
            b.max[1] = b.max[1].max(p[1]);
        }
        Some(b)
    }

    fn union(self, other: BoundingBox) -> BoundingBox {
        BoundingBox {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// One exterior ring plus holes. Rings are closed (first vertex repeated last).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Position>,
    interiors: Vec<Vec<Position>>,
    bbox: BoundingBox,
    /// Axis-aligned rectangle without holes: the closed bbox test is exact.
    rectangular: bool,
}

impl Polygon {
    /// Validates and builds a polygon. Consecutive duplicate vertices are
    /// collapsed before the checks.
    pub fn new(exterior: Vec<Position>, interiors: Vec<Vec<Position>>) -> Result<Self, String> {
        let exterior = clean_ring(exterior).map_err(|e| format!("exterior ring: {e}"))?;
        if let Some((i, j)) = find_self_intersection(&exterior) {
            return Err(format!(
                "exterior ring self-intersects (segments {i} and {j})"
            ));
        }
        let interiors = interiors
            .into_iter()
            .enumerate()
            .map(|(k, r)| clean_ring(r).map_err(|e| format!("interior ring {k}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let bbox = BoundingBox::of_points(&exterior).expect("validated ring is non-empty");
        let rectangular = interiors.is_empty()
            && exterior.len() == 5
            && exterior.iter().all(|v| {
                (v[0] == bbox.min[0] || v[0] == bbox.max[0]) && (v[1] == bbox.min[1] || v[1] == bbox.max[1])
            })
            && exterior.windows(2).all(|w| w[0][0] == w[1][0] || w[0][1] == w[1][1]);
        Ok(Self {
            exterior,
            interiors,
            bbox,
            rectangular,
        })
    }

    /// Axis-aligned rectangle with a counter-clockwise exterior ring.
    pub fn rectangle(min: Position, max: Position) -> Self {
        let ring = vec![min, [max[0], min[1]], max, [min[0], max[1]], min];
        Polygon::new(ring, Vec::new()).expect("non-degenerate rectangle")
    }

    pub fn exterior(&self) -> &[Position] {
        &self.exterior
    }

    pub fn interiors(&self) -> &[Vec<Position>] {
        &self.interiors
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    fn rings(&self) -> impl Iterator<Item = &[Position]> {
        std::iter::once(self.exterior.as_slice()).chain(self.interiors.iter().map(Vec::as_slice))
    }

    /// Even-odd containment; points on any ring are inside.
    pub fn contains(&self, p: Position) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        if self.rectangular {
            return true;
        }
        let mut inside = false;
        for ring in self.rings() {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if on_segment(p, a, b) {
                    return true;
                }
                if (a[1] > p[1]) != (b[1] > p[1]) {
                    let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                    if p[0] < x {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

fn clean_ring(ring: Vec<Position>) -> Result<Vec<Position>, String> {
    if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err("non-finite coordinate".into());
    }
    if ring.len() < 4 {
        return Err(format!("{} vertices, need at least 4", ring.len()));
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    let mut out: Vec<Position> = Vec::with_capacity(ring.len());
    for p in ring {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    if out.len() < 4 {
        return Err("fewer than 3 distinct vertices".into());
    }
    Ok(out)
}

fn cross(o: Position, a: Position, b: Position) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn within_box(p: Position, a: Position, b: Position) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn on_segment(p: Position, a: Position, b: Position) -> bool {
    within_box(p, a, b) && cross(a, b, p) == 0.0
}

fn segments_intersect(a: Position, b: Position, c: Position, d: Position) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(a, c, d))
        || (d2 == 0.0 && within_box(b, c, d))
        || (d3 == 0.0 && within_box(c, a, b))
        || (d4 == 0.0 && within_box(d, a, b))
}

/// Returns the first pair of offending segment indices, if any.
fn find_self_intersection(ring: &[Position]) -> Option<(usize, usize)> {
    let n = ring.len() - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[i + 1]);
        for j in i + 1..n {
            let (c, d) = (ring[j], ring[j + 1]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // shared vertex is fine, folding back along the same line is not
                let (shared, other_a, other_c) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if cross(shared, other_a, other_c) == 0.0
                    && ((other_a[0] - shared[0]) * (other_c[0] - shared[0])
                        + (other_a[1] - shared[1]) * (other_c[1] - shared[1]))
                        > 0.0
                {
                    return Some((i, j));
                }
            } else if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    id: String,
    polygons: Vec<Polygon>,
    bbox: BoundingBox,
}

impl Zone {
    pub fn new(id: impl Into<String>, polygons: Vec<Polygon>) -> Result<Self, ZoningError> {
        let id = id.into();
        let bbox = polygons
            .iter()
            .map(Polygon::bbox)
            .reduce(BoundingBox::union)
            .ok_or_else(|| ZoningError::Geometry {
                feature: format!("id {id:?}"),
                reason: "zone has no polygons".into(),
            })?;
        Ok(Self { id, polygons, bbox })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn contains(&self, p: Position) -> bool {
        self.bbox.contains(p) && self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// Ordered zones with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    bbox: Option<BoundingBox>,
}

impl ZoneSet {
    pub fn new(zones: Vec<Zone>) -> Result<Self, ZoningError> {
        let mut seen = HashSet::with_capacity(zones.len());
        for z in &zones {
            if !seen.insert(z.id.as_str()) {
                return Err(ZoningError::Geometry {
                    feature: format!("id {:?}", z.id),
                    reason: "duplicate zone id".into(),
                });
            }
        }
        let bbox = zones.iter().map(Zone::bbox).reduce(BoundingBox::union);
        Ok(Self { zones, bbox })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        self.bbox
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.zones.iter().map(Zone::id)
    }

    /// Brute-force assignment by scanning every zone.
    pub fn assign_linear(&self, p: GeoCoordinate) -> Option<&str> {
        let p = [p.longitude, p.latitude];
        self.zones
            .iter()
            .filter(|z| z.contains(p))
            .map(Zone::id)
            .min()
    }

    pub fn from_geojson_str(text: &str) -> Result<Self, ZoningError> {
        let gj = GeoJson::from_str(text).map_err(|e| ZoningError::Parse(e.to_string()))?;
        let fc = match gj {
            GeoJson::FeatureCollection(fc) => fc,
            _ => return Err(ZoningError::Parse("expected a FeatureCollection".into())),
        };
        let mut zones = Vec::with_capacity(fc.features.len());
        for (i, feature) in fc.features.iter().enumerate() {
            let id = match feature.property("id") {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) => {
                    return Err(ZoningError::Parse(format!(
                        "feature #{i}: property \"id\" must be a string, found {other}"
                    )))
                }
                None => {
                    return Err(ZoningError::Parse(format!(
                        "feature #{i}: missing property \"id\""
                    )))
                }
            };
            let name = format!("#{i} (id {id:?})");
            let geometry = feature.geometry.as_ref().ok_or_else(|| ZoningError::Geometry {
                feature: name.clone(),
                reason: "missing geometry".into(),
            })?;
            let rings_list: Vec<&Vec<Vec<Vec<f64>>>> = match &geometry.value {
                Value::Polygon(rings) => vec![rings],
                Value::MultiPolygon(polys) => polys.iter().collect(),
                other => {
                    return Err(ZoningError::Geometry {
                        feature: name,
                        reason: format!("unsupported geometry type {}", other.type_name()),
                    })
                }
            };
            let mut polygons = Vec::with_capacity(rings_list.len());
            for rings in rings_list {
                let mut converted = Vec::with_capacity(rings.len());
                for ring in rings {
                    let mut r = Vec::with_capacity(ring.len());
                    for pos in ring {
                        if pos.len() < 2 {
                            return Err(ZoningError::Parse(format!(
                                "feature {name}: position with fewer than 2 values"
                            )));
                        }
                        r.push([pos[0], pos[1]]);
                    }
                    converted.push(r);
                }
                let mut it = converted.into_iter();
                let exterior = it.next().ok_or_else(|| ZoningError::Geometry {
                    feature: name.clone(),
                    reason: "polygon without rings".into(),
                })?;
                let poly = Polygon::new(exterior, it.collect()).map_err(|reason| {
                    ZoningError::Geometry {
                        feature: name.clone(),
                        reason,
                    }
                })?;
                polygons.push(poly);
            }
            zones.push(Zone::new(id, polygons).map_err(|_| ZoningError::Geometry {
                feature: name,
                reason: "empty MultiPolygon".into(),
            })?);
        }
        ZoneSet::new(zones)
    }

    /// GeoJSON FeatureCollection with an `"id"` property per feature.
    pub fn to_geojson_string(&self) -> String {
        let features: Vec<serde_json::Value> = self
            .zones
            .iter()
            .map(|z| {
                let rings_of = |p: &Polygon| -> serde_json::Value {
                    p.rings()
                        .map(|r| r.iter().map(|v| vec![v[0], v[1]]).collect::<Vec<_>>())
                        .collect::<Vec<_>>()
                        .into()
                };
                let geometry = if z.polygons.len() == 1 {
                    serde_json::json!({"type": "Polygon", "coordinates": rings_of(&z.polygons[0])})
                } else {
                    let polys: Vec<serde_json::Value> = z.polygons.iter().map(rings_of).collect();
                    serde_json::json!({"type": "MultiPolygon", "coordinates": polys})
                };
                serde_json::json!({
                    "type": "Feature",
                    "properties": {"id": z.id},
                    "geometry": geometry,
                })
            })
            .collect();
        let fc = serde_json::json!({"type": "FeatureCollection", "features": features});
        serde_json::to_string(&fc).expect("zone geojson serializes")
    }
}

pub fn load_zones(path: impl AsRef<Path>) -> Result<ZoneSet, ZoningError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ZoningError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ZoneSet::from_geojson_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    #[default]
    Rtree,
    Grid,
}

impl FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rtree" => Ok(IndexKind::Rtree),
            "grid" => Ok(IndexKind::Grid),
            other => Err(format!("unknown index kind {other:?} (expected rtree or grid)")),
        }
    }
}

/// Static bounding-box tree packed bottom-up with sort-tile-recursive
/// ordering: leaves are sorted into vertical slices by x-centre, each slice
/// by y-centre, then every run of `NODE_SIZE` consecutive boxes becomes a
/// node of the level above. Node `i` of a level owns children
/// `i * NODE_SIZE ..` of the level below, so no child pointers are stored.
struct PackedTree {
    /// `levels[0]` holds the leaf boxes in packed order; the last level is the root.
    levels: Vec<Level>,
    /// Leaf position -> polygon.
    items: Vec<Leaf>,
}

/// Boxes of one tree level, stored column-wise so a node's children can be
/// tested without branching.
#[derive(Default)]
struct Level {
    min_x: Vec<f64>,
    min_y: Vec<f64>,
    max_x: Vec<f64>,
    max_y: Vec<f64>,
}

impl Level {
    /// Pads to whole nodes with empty boxes so every node has `NODE_SIZE`
    /// children.
    fn from_boxes(boxes: &[BoundingBox]) -> Self {
        let padded = boxes.len().div_ceil(NODE_SIZE) * NODE_SIZE;
        let column = |get: fn(&BoundingBox) -> f64, pad: f64| {
            let mut v: Vec<f64> = boxes.iter().map(get).collect();
            v.resize(padded, pad);
            v
        };
        Level {
            min_x: column(|b| b.min[0], f64::INFINITY),
            min_y: column(|b| b.min[1], f64::INFINITY),
            max_x: column(|b| b.max[0], f64::NEG_INFINITY),
            max_y: column(|b| b.max[1], f64::NEG_INFINITY),
        }
    }

    /// Bit `i` is set when box `start + i` contains `p`.
    fn mask(&self, start: usize, p: Position) -> u32 {
        let node = start..start + NODE_SIZE;
        let x0: &[f64; NODE_SIZE] = self.min_x[node.clone()].try_into().unwrap();
        let y0: &[f64; NODE_SIZE] = self.min_y[node.clone()].try_into().unwrap();
        let x1: &[f64; NODE_SIZE] = self.max_x[node.clone()].try_into().unwrap();
        let y1: &[f64; NODE_SIZE] = self.max_y[node].try_into().unwrap();
        let mut mask = 0u32;
        for i in 0..NODE_SIZE {
            let hit = (p[0] >= x0[i]) & (p[0] <= x1[i]) & (p[1] >= y0[i]) & (p[1] <= y1[i]);
            mask |= u32::from(hit) << i;
        }
        mask
    }
}

#[derive(Debug, Clone, Copy)]
struct Leaf {
    zone: u32,
    polygon: u32,
    /// The leaf box is the polygon itself, so a box hit needs no ring test.
    exact: bool,
}

const NODE_SIZE: usize = 8;

impl PackedTree {
    fn build(mut leaves: Vec<(BoundingBox, Leaf)>) -> Self {
        let center = |b: &BoundingBox, axis: usize| b.min[axis] + b.max[axis];
        let n = leaves.len();
        if n > NODE_SIZE {
            let nodes = n.div_ceil(NODE_SIZE);
            let slices = (nodes as f64).sqrt().ceil() as usize;
            let per_slice = slices * NODE_SIZE;
            leaves.sort_by(|a, b| center(&a.0, 0).total_cmp(&center(&b.0, 0)));
            for slice in leaves.chunks_mut(per_slice) {
                slice.sort_by(|a, b| center(&a.0, 1).total_cmp(&center(&b.0, 1)));
            }
        }
        let (mut boxes, items): (Vec<_>, Vec<_>) = leaves.into_iter().unzip();
        let mut levels = vec![Level::from_boxes(&boxes)];
        while boxes.len() > 1 {
            boxes = boxes
                .chunks(NODE_SIZE)
                .map(|c| c.iter().copied().reduce(BoundingBox::union).unwrap())
                .collect();
            levels.push(Level::from_boxes(&boxes));
        }
        PackedTree { levels, items }
    }

    /// Calls `f` for every leaf whose box contains `p`.
    fn for_each_containing(&self, p: Position, f: &mut impl FnMut(Leaf)) {
        if self.items.is_empty() || self.levels[self.levels.len() - 1].mask(0, p) != 1 {
            return;
        }
        if self.levels.len() == 1 {
            f(self.items[0]);
        } else {
            self.descend(self.levels.len() - 1, 0, p, f);
        }
    }

    fn descend(&self, level: usize, node: usize, p: Position, f: &mut impl FnMut(Leaf)) {
        let start = node * NODE_SIZE;
        let mut mask = self.levels[level - 1].mask(start, p);
        while mask != 0 {
            let child = start + mask.trailing_zeros() as usize;
            mask &= mask - 1;
            if level == 1 {
                f(self.items[child]);
            } else {
                self.descend(level - 1, child, p, f);
            }
        }
    }
}

struct UniformGrid {
    origin: Position,
    cell: Position,
    cols: usize,
    rows: usize,
    /// `(zone, polygon)` per cell, row-major.
    cells: Vec<Vec<(u32, u32)>>,
}

impl UniformGrid {
    fn build(zones: &ZoneSet) -> Self {
        let n_polys: usize = zones.zones.iter().map(|z| z.polygons.len()).sum();
        let Some(bbox) = zones.bbox else {
            return UniformGrid {
                origin: [0.0, 0.0],
                cell: [1.0, 1.0],
                cols: 1,
                rows: 1,
                cells: vec![Vec::new()],
            };
        };
        let side = (n_polys as f64).sqrt().ceil().max(1.0) as usize;
        let span = [
            (bbox.max[0] - bbox.min[0]).max(f64::MIN_POSITIVE),
            (bbox.max[1] - bbox.min[1]).max(f64::MIN_POSITIVE),
        ];
        let mut grid = UniformGrid {
            origin: bbox.min,
            cell: [span[0] / side as f64, span[1] / side as f64],
            cols: side,
            rows: side,
            cells: vec![Vec::new(); side * side],
        };
        for (zi, z) in zones.zones.iter().enumerate() {
            for (pi, p) in z.polygons.iter().enumerate() {
                let (c0, r0) = grid.cell_of(p.bbox.min);
                let (c1, r1) = grid.cell_of(p.bbox.max);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        grid.cells[r * grid.cols + c].push((zi as u32, pi as u32));
                    }
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Position) -> (usize, usize) {
        let c = ((p[0] - self.origin[0]) / self.cell[0]).floor();
        let r = ((p[1] - self.origin[1]) / self.cell[1]).floor();
        (
            c.clamp(0.0, (self.cols - 1) as f64) as usize,
            r.clamp(0.0, (self.rows - 1) as f64) as usize,
        )
    }
}

enum Backend {
    Rtree(PackedTree),
    Grid(UniformGrid),
}

/// Immutable spatial index over a [`ZoneSet`]; safe to query from many threads.
pub struct ZoneIndex {
    zones: ZoneSet,
    backend: Backend,
}

impl ZoneIndex {
    pub fn build(zones: ZoneSet, kind: IndexKind) -> Self {
        let backend = match kind {
            IndexKind::Rtree => {
                let entries = zones
                    .zones
                    .iter()
                    .enumerate()
                    .flat_map(|(zi, z)| {
                        z.polygons
                            .iter()
                            .enumerate()
                            .map(move |(pi, p)| {
                                let leaf = Leaf { zone: zi as u32, polygon: pi as u32, exact: p.rectangular };
                                (p.bbox, leaf)
                            })
                    })
                    .collect();
                Backend::Rtree(PackedTree::build(entries))
            }
            IndexKind::Grid => Backend::Grid(UniformGrid::build(&zones)),
        };
        Self { zones, backend }
    }

    pub fn zones(&self) -> &ZoneSet {
        &self.zones
    }

    pub fn kind(&self) -> IndexKind {
        match self.backend {
            Backend::Rtree(_) => IndexKind::Rtree,
            Backend::Grid(_) => IndexKind::Grid,
        }
    }

    /// Position in the zone set of the zone containing `p`.
    pub fn assign_position(&self, p: GeoCoordinate) -> Option<usize> {
        let p = [p.longitude, p.latitude];
        let mut best: Option<usize> = None;
        let mut consider = |zone: u32, polygon: u32, exact: bool| {
            let zi = zone as usize;
            if let Some(b) = best {
                if b == zi || self.zones.zones[b].id <= self.zones.zones[zi].id {
                    return;
                }
            }
            if exact || self.zones.zones[zi].polygons[polygon as usize].contains(p) {
                best = Some(zi);
            }
        };
        match &self.backend {
            Backend::Rtree(tree) => {
                tree.for_each_containing(p, &mut |leaf| consider(leaf.zone, leaf.polygon, leaf.exact));
            }
            Backend::Grid(grid) => {
                match self.zones.bbox {
                    Some(bbox) if bbox.contains(p) => {}
                    _ => return None,
                }
                let (c, r) = grid.cell_of(p);
                for &(zone, polygon) in &grid.cells[r * grid.cols + c] {
                    consider(zone, polygon, false);
                }
            }
        }
        best
    }

    pub fn assign(&self, p: GeoCoordinate) -> Option<&str> {
        self.assign_position(p).map(|i| self.zones.zones[i].id())
    }
}

/// Zone id -> group id, free of conflicting claims.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZoneMapping {
    groups: BTreeMap<String, String>,
}

impl ZoneMapping {
    pub fn from_pairs<I, Z, G>(pairs: I) -> Result<Self, ZoningError>
    where
        I: IntoIterator<Item = (Z, G)>,
        Z: Into<String>,
        G: Into<String>,
    {
        let mut groups = BTreeMap::new();
        for (zone, group) in pairs {
            let (zone, group) = (zone.into(), group.into());
            match groups.entry(zone) {
                Entry::Vacant(v) => {
                    v.insert(group);
                }
                Entry::Occupied(o) => {
                    if *o.get() != group {
                        return Err(ZoningError::Conflict {
                            zone: o.key().clone(),
                            first: o.get().clone(),
                            second: group,
                        });
                    }
                }
            }
        }
        Ok(Self { groups })
    }

    /// Reads a `zone_id,group_id` CSV.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, ZoningError> {
        #[derive(Deserialize)]
        struct Row {
            zone_id: String,
            group_id: String,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ZoningError::Parse(format!("mapping: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != ["zone_id", "group_id"] {
            return Err(ZoningError::Parse(format!(
                "mapping header must be zone_id,group_id, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pairs = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| ZoningError::Parse(format!("mapping: {e}")))?;
            pairs.push((row.zone_id, row.group_id));
        }
        Self::from_pairs(pairs)
    }

    pub fn group_of<'a>(&'a self, zone: &'a str) -> &'a str {
        self.groups.get(zone).map(String::as_str).unwrap_or(zone)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub fn load_mapping(path: impl AsRef<Path>) -> Result<ZoneMapping, ZoningError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ZoningError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ZoneMapping::from_csv_reader(std::io::BufReader::new(file))
}

/// Merges zones into their groups. Groups appear in order of their first
/// member; unmapped zones keep their own id and merge with a group of the
/// same name.
pub fn aggregate_zones(zones: &ZoneSet, mapping: &ZoneMapping) -> Result<ZoneSet, ZoningError> {
    let mut order: Vec<String> = Vec::new();
    let mut members: HashMap<String, Vec<Polygon>> = HashMap::new();
    for z in &zones.zones {
        let group = mapping.group_of(&z.id);
        let polys = members.entry(group.to_string()).or_insert_with(|| {
            order.push(group.to_string());
            Vec::new()
        });
        polys.extend(z.polygons.iter().cloned());
    }
    let merged = order
        .into_iter()
        .map(|g| {
            let polys = members.remove(&g).expect("group recorded");
            Zone::new(g, polys)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ZoneSet::new(merged)
}

//! Weighted directed origin-destination network.
//!
//! Nodes are zone ids kept in lexicographic order; edges are stored sorted by
//! `(origin, destination)` so every serialization is deterministic no matter
//! how the trips were ordered or sharded.

use crate::geodesy::{GeoCoordinate, GeodesyError, Utm, UtmCoordinate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trip endpoint in either coordinate system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Geo(GeoCoordinate),
    Utm(UtmCoordinate),
}

impl Endpoint {
    pub fn to_geo(self, utm: &Utm) -> Result<GeoCoordinate, GeodesyError> {
        match self {
            Endpoint::Geo(g) => Ok(g),
            Endpoint::Utm(u) => utm.to_geographic(u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub origin: Endpoint,
    pub destination: Endpoint,
    pub multiplicity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZonedTrip {
    pub origin: String,
    pub destination: String,
    pub multiplicity: u64,
}

impl ZonedTrip {
    pub fn new(origin: impl Into<String>, destination: impl Into<String>, multiplicity: u64) -> Self {
        Self {
            origin: origin.into(),
            destination: destination.into(),
            multiplicity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DegreeProfile {
    pub k_in: u64,
    pub k_out: u64,
    pub strength_in: u64,
    pub strength_out: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub origin: usize,
    pub destination: usize,
    pub weight: u64,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.origin == self.destination
    }
}

/// Accumulates trip counts. Builders over disjoint shards of a stream can be
/// merged in any order and give the same network.
#[derive(Debug, Clone, Default)]
pub struct NetworkBuilder {
    include_self_loops: bool,
    counts: HashMap<(String, String), u64>,
    extra_nodes: BTreeSet<String>,
    discarded_self_loops: u64,
}

impl NetworkBuilder {
    pub fn new(include_self_loops: bool) -> Self {
        Self {
            include_self_loops,
            ..Self::default()
        }
    }

    pub fn add_trip(&mut self, origin: &str, destination: &str, multiplicity: u64) {
        if multiplicity == 0 {
            return;
        }
        if origin == destination && !self.include_self_loops {
            self.discarded_self_loops += multiplicity;
            return;
        }
        *self
            .counts
            .entry((origin.to_string(), destination.to_string()))
            .or_insert(0) += multiplicity;
    }

    pub fn add(&mut self, trip: &ZonedTrip) {
        self.add_trip(&trip.origin, &trip.destination, trip.multiplicity);
    }

    /// Adds a node even if no trip touches it.
    pub fn add_node(&mut self, id: impl Into<String>) {
        self.extra_nodes.insert(id.into());
    }

    pub fn merge(mut self, other: NetworkBuilder) -> NetworkBuilder {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (std::mem::take(&mut self), other)
        } else {
            (other, self)
        };
        for (k, w) in small.counts {
            *big.counts.entry(k).or_insert(0) += w;
        }
        big.extra_nodes.extend(small.extra_nodes);
        big.discarded_self_loops += small.discarded_self_loops;
        big
    }

    pub fn finish(self) -> OdNetwork {
        let mut ids: BTreeSet<String> = self.extra_nodes;
        for (o, d) in self.counts.keys() {
            if !ids.contains(o) {
                ids.insert(o.clone());
            }
            if !ids.contains(d) {
                ids.insert(d.clone());
            }
        }
        let nodes: Vec<String> = ids.into_iter().collect();
        let position: HashMap<&str, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut edges: Vec<Edge> = self
            .counts
            .iter()
            .map(|((o, d), &w)| Edge {
                origin: position[o.as_str()],
                destination: position[d.as_str()],
                weight: w,
            })
            .collect();
        edges.sort_unstable_by_key(|e| (e.origin, e.destination));
        OdNetwork::from_parts(nodes, edges, self.discarded_self_loops)
    }
}

/// Weighted directed graph over zone ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdNetwork {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    profiles: Vec<DegreeProfile>,
    total_weight: u64,
    discarded_self_loops: u64,
}

impl OdNetwork {
    fn from_parts(nodes: Vec<String>, edges: Vec<Edge>, discarded_self_loops: u64) -> Self {
        let mut profiles = vec![DegreeProfile::default(); nodes.len()];
        let mut total_weight = 0u64;
        for e in &edges {
            profiles[e.origin].k_out += 1;
            profiles[e.origin].strength_out += e.weight;
            profiles[e.destination].k_in += 1;
            profiles[e.destination].strength_in += e.weight;
            total_weight += e.weight;
        }
        Self {
            nodes,
            edges,
            profiles,
            total_weight,
            discarded_self_loops,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sum of all edge weights (T).
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn self_loop_count(&self) -> usize {
        self.edges.iter().filter(|e| e.is_self_loop()).count()
    }

    /// Intra-zone trips left out because self-loops were disabled.
    pub fn discarded_self_loops(&self) -> u64 {
        self.discarded_self_loops
    }

    /// Node ids in lexicographic order.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Edges sorted by `(origin, destination)` node position.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_position(&self, id: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }

    pub fn weight(&self, origin: &str, destination: &str) -> Option<u64> {
        let o = self.node_position(origin)?;
        let d = self.node_position(destination)?;
        self.edges
            .binary_search_by_key(&(o, d), |e| (e.origin, e.destination))
            .ok()
            .map(|i| self.edges[i].weight)
    }

    pub fn profiles(&self) -> &[DegreeProfile] {
        &self.profiles
    }

    pub fn degree_profile(&self, node: &str) -> Result<DegreeProfile, NetworkError> {
        self.node_position(node)
            .map(|i| self.profiles[i])
            .ok_or_else(|| NetworkError::UnknownNode(node.to_string()))
    }

    /// Writes `origin<TAB>destination<TAB>weight` rows in lexicographic order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.nodes[e.origin], self.nodes[e.destination], e.weight
            )?;
        }
        out.flush()
    }

    /// Reads an edge list written by [`write_tsv`](Self::write_tsv). Repeated
    /// pairs are summed; zero weights are rejected.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<OdNetwork, NetworkError> {
        let mut builder = NetworkBuilder::new(true);
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(NetworkError::Parse {
                    line: lineno,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let weight: u64 = fields[2].trim().parse().map_err(|e| NetworkError::Parse {
                line: lineno,
                reason: format!("bad weight {:?}: {e}", fields[2]),
            })?;
            if weight == 0 {
                return Err(NetworkError::Parse {
                    line: lineno,
                    reason: "zero weight".into(),
                });
            }
            builder.add_trip(fields[0], fields[1], weight);
        }
        Ok(builder.finish())
    }
}

/// Aggregates a trip stream into a network.
pub fn build_network<'a, I>(trips: I, include_self_loops: bool) -> OdNetwork
where
    I: IntoIterator<Item = &'a ZonedTrip>,
{
    let mut builder = NetworkBuilder::new(include_self_loops);
    for t in trips {
        builder.add(t);
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn sample() -> OdNetwork {
        build_network(&[ZonedTrip::new("A", "B", 3), ZonedTrip::new("B", "A", 1)], true)
    }

    #[test]
    fn two_node_example() {
        let net = sample();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.edge_count(), 2);
        assert_eq!(net.weight("A", "B"), Some(3));
        assert_eq!(net.weight("B", "A"), Some(1));
        assert_eq!(net.weight("A", "A"), None);
        assert_eq!(net.total_weight(), 4);
        assert_eq!(
            net.degree_profile("A").unwrap(),
            DegreeProfile {
                k_in: 1,
                k_out: 1,
                strength_in: 1,
                strength_out: 3
            }
        );
        assert!(matches!(
            net.degree_profile("Z"),
            Err(NetworkError::UnknownNode(_))
        ));
    }

    #[test]
    fn empty_stream() {
        let net = build_network(std::iter::empty(), true);
        assert_eq!((net.node_count(), net.edge_count(), net.total_weight()), (0, 0, 0));
    }

    #[test]
    fn isolated_node() {
        let mut b = NetworkBuilder::new(true);
        b.add_trip("A", "B", 2);
        b.add_node("Q");
        let net = b.finish();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.degree_profile("Q").unwrap(), DegreeProfile::default());
    }

    #[test]
    fn self_loops_flag() {
        let trips = [ZonedTrip::new("A", "A", 5), ZonedTrip::new("A", "B", 1)];
        let with = build_network(&trips, true);
        assert_eq!((with.edge_count(), with.total_weight(), with.self_loop_count()), (2, 6, 1));
        let without = build_network(&trips, false);
        assert_eq!((without.edge_count(), without.total_weight()), (1, 1));
        assert_eq!(without.discarded_self_loops(), 5);
    }

    #[test]
    fn matches_dictionary_of_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trips: Vec<ZonedTrip> = (0..10_000)
            .map(|_| {
                ZonedTrip::new(
                    format!("z{}", rng.random_range(0..20)),
                    format!("z{}", rng.random_range(0..20)),
                    rng.random_range(1..4),
                )
            })
            .collect();
        let mut oracle: BTreeMap<(String, String), u64> = BTreeMap::new();
        for t in &trips {
            *oracle.entry((t.origin.clone(), t.destination.clone())).or_default() += t.multiplicity;
        }
        let net = build_network(&trips, true);
        assert_eq!(net.edge_count(), oracle.len());
        for ((o, d), w) in &oracle {
            assert_eq!(net.weight(o, d), Some(*w));
        }
        for id in net.nodes() {
            let p = net.degree_profile(id).unwrap();
            let outs: Vec<_> = oracle.iter().filter(|((o, _), _)| o == id).collect();
            let ins: Vec<_> = oracle.iter().filter(|((_, d), _)| d == id).collect();
            assert_eq!(p.k_out as usize, outs.len());
            assert_eq!(p.k_in as usize, ins.len());
            assert_eq!(p.strength_out, outs.iter().map(|(_, w)| **w).sum::<u64>());
            assert_eq!(p.strength_in, ins.iter().map(|(_, w)| **w).sum::<u64>());
        }
    }

    #[test]
    fn tsv_round_trip_and_order() {
        let trips = [
            ZonedTrip::new("b", "a", 2),
            ZonedTrip::new("a", "c", 1),
            ZonedTrip::new("a", "b", 7),
        ];
        let net = build_network(&trips, true);
        let mut buf = Vec::new();
        net.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "a\tb\t7\na\tc\t1\nb\ta\t2\n");
        let back = OdNetwork::read_tsv(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn tsv_errors() {
        assert!(matches!(
            OdNetwork::read_tsv("a\tb\n".as_bytes()),
            Err(NetworkError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            OdNetwork::read_tsv("a\tb\t1\na\tb\t0\n".as_bytes()),
            Err(NetworkError::Parse { line: 2, .. })
        ));
        assert!(OdNetwork::read_tsv("a\tb\tx\n".as_bytes()).is_err());
    }

    fn trips_strategy() -> impl Strategy<Value = Vec<(u8, u8, u64)>> {
        prop::collection::vec((0u8..8, 0u8..8, 1u64..5), 0..60)
    }

    fn to_trips(v: &[(u8, u8, u64)]) -> Vec<ZonedTrip> {
        v.iter()
            .map(|&(o, d, m)| ZonedTrip::new(format!("n{o}"), format!("n{d}"), m))
            .collect()
    }

    proptest! {
        #[test]
        fn order_independent(v in trips_strategy(), seed in any::<u64>()) {
            let trips = to_trips(&v);
            let mut shuffled = trips.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(build_network(&trips, true), build_network(&shuffled, true));
        }

        #[test]
        fn merge_equals_concatenation(a in trips_strategy(), b in trips_strategy()) {
            let (ta, tb) = (to_trips(&a), to_trips(&b));
            let mut ba = NetworkBuilder::new(true);
            ta.iter().for_each(|t| ba.add(t));
            let mut bb = NetworkBuilder::new(true);
            tb.iter().for_each(|t| bb.add(t));
            let merged = ba.merge(bb).finish();
            let whole = build_network(ta.iter().chain(tb.iter()), true);
            prop_assert_eq!(merged, whole);
        }

        #[test]
        fn flow_is_conserved(v in trips_strategy(), loops in any::<bool>()) {
            let net = build_network(&to_trips(&v), loops);
            let s_in: u64 = net.profiles().iter().map(|p| p.strength_in).sum();
            let s_out: u64 = net.profiles().iter().map(|p| p.strength_out).sum();
            prop_assert_eq!(s_in, net.total_weight());
            prop_assert_eq!(s_out, net.total_weight());
            prop_assert!(net.edges().iter().all(|e| e.weight >= 1));
            let raw: u64 = v.iter().map(|t| t.2).sum();
            prop_assert_eq!(net.total_weight() + net.discarded_self_loops(), raw);
        }
    }
}

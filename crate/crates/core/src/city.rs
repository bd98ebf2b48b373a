//! City model: street graph, blocks with derived parking capacity, and the
//! gazetteer used to geolocate free-text place names.
//!
//! Everything lives in a planar local frame in meters. Map documents carry
//! WGS84 lat/lon and are projected at load time around the document origin.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_SLOT_LENGTH: f64 = 5.0;
const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Allowed relative mismatch between a declared and a geometric edge length.
const LENGTH_TOLERANCE: f64 = 0.01;
/// How far outside the node bounding box a gazetteer entry may sit.
const BOUNDS_MARGIN_M: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CityError {
    #[error("map document does not match schema: {0}")]
    Schema(String),
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("edge {edge:?} references missing node {node:?}")]
    DanglingEndpoint { edge: String, node: String },
    #[error("block {block:?} references missing edge {edge:?}")]
    UnknownEdge { block: String, edge: String },
    #[error("edge {edge:?} has non-positive length {length}")]
    NonPositiveLength { edge: String, length: f64 },
    #[error("block {block:?} has invalid span [{start}, {end}] (usable length {usable_length})")]
    InvalidSpan {
        block: String,
        start: f64,
        end: f64,
        usable_length: f64,
    },
    #[error("{id:?} has a non-finite coordinate or length")]
    NonFinite { id: String },
    #[error("duplicate gazetteer key {0:?}")]
    DuplicateKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: f64,
    pub y: f64,
}

impl Coordinate {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Coordinate) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.2}, {:.2})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Equirectangular projection into the planar frame centered on `self`.
    pub fn project(&self, p: GeoPoint) -> Coordinate {
        let lat0 = self.lat.to_radians();
        Coordinate {
            x: EARTH_RADIUS_M * (p.lon - self.lon).to_radians() * lat0.cos(),
            y: EARTH_RADIUS_M * (p.lat - self.lat).to_radians(),
        }
    }

    pub fn unproject(&self, c: Coordinate) -> GeoPoint {
        let lat0 = self.lat.to_radians();
        GeoPoint {
            lat: self.lat + (c.y / EARTH_RADIUS_M).to_degrees(),
            lon: self.lon + (c.x / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub coordinate: Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetSegment {
    pub id: String,
    pub from: String,
    pub to: String,
    pub street_name: String,
    pub length: f64,
    pub directed: bool,
}

/// A `[start, end]` interval in meters along a block.
pub type Span = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub segment: String,
    pub usable_length: f64,
    pub prohibited_spans: Vec<Span>,
    pub garage_spans: Vec<Span>,
    pub capacity: u32,
    pub in_metered_zone: bool,
}

/// Total length covered by the union of `spans`, clipped to `[0, limit]`.
pub fn union_length(spans: impl IntoIterator<Item = Span>, limit: f64) -> f64 {
    let mut clipped: Vec<Span> = spans
        .into_iter()
        .map(|(s, e)| (s.max(0.0), e.min(limit)))
        .filter(|(s, e)| e > s)
        .collect();
    clipped.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<Span> = None;
    for (s, e) in clipped {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

/// Number of parking slots left on a block once prohibited and garage spans
/// are removed. Overlapping spans are merged before subtraction.
pub fn derive_capacity(
    usable_length: f64,
    prohibited: &[Span],
    garages: &[Span],
    slot_length: f64,
) -> u32 {
    if !(slot_length > 0.0) || !(usable_length > 0.0) {
        return 0;
    }
    let blocked = union_length(
        prohibited.iter().chain(garages.iter()).copied(),
        usable_length,
    );
    let free = (usable_length - blocked).max(0.0);
    // absorb representation error such as 29.999999999 m meaning 30 m
    ((free / slot_length) + 1e-9).floor() as u32
}

impl Block {
    pub fn derive_capacity(&self, slot_length: f64) -> u32 {
        derive_capacity(
            self.usable_length,
            &self.prohibited_spans,
            &self.garage_spans,
            slot_length,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Street,
    Intersection,
    Landmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub key: String,
    pub coordinate: Coordinate,
    pub kind: PlaceKind,
}

/// Lowercases, folds accents, spaces out `&` and collapses whitespace.
pub fn normalize_key(text: &str) -> String {
    let folded: String = text
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect();
    folded
        .replace('&', " & ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    entries: HashMap<String, GazetteerEntry>,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a place; the key is normalized first.
    pub fn register(
        &mut self,
        key: &str,
        coordinate: Coordinate,
        kind: PlaceKind,
    ) -> Result<(), CityError> {
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(CityError::Schema("empty gazetteer key".into()));
        }
        if !coordinate.is_finite() {
            return Err(CityError::NonFinite { id: key });
        }
        if self.entries.contains_key(&key) {
            return Err(CityError::DuplicateKey(key));
        }
        self.entries.insert(
            key.clone(),
            GazetteerEntry {
                key,
                coordinate,
                kind,
            },
        );
        Ok(())
    }

    /// Exact lookup after normalization. Intersections also match with the
    /// two street names swapped.
    pub fn lookup(&self, text: &str) -> Option<&GazetteerEntry> {
        let key = normalize_key(text);
        if let Some(e) = self.entries.get(&key) {
            return Some(e);
        }
        let (a, b) = key.split_once(" & ")?;
        self.entries
            .get(&format!("{b} & {a}"))
            .filter(|e| e.kind == PlaceKind::Intersection)
    }

    pub fn resolve_location(&self, text: &str) -> Option<Coordinate> {
        self.lookup(text).map(|e| e.coordinate)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<&GazetteerEntry> {
        let mut v: Vec<_> = self.entries.values().collect();
        v.sort_by(|a, b| a.key.cmp(&b.key));
        v
    }

    pub fn entries_of(&self, kind: PlaceKind) -> Vec<&GazetteerEntry> {
        self.entries()
            .into_iter()
            .filter(|e| e.kind == kind)
            .collect()
    }

    /// Longest key length in whitespace-separated words.
    pub fn max_key_words(&self) -> usize {
        self.entries
            .keys()
            .map(|k| k.split(' ').count())
            .max()
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// map document

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapDocument {
    pub origin: GeoPoint,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub blocks: Vec<BlockDoc>,
    #[serde(default)]
    pub gazetteer: Vec<GazetteerDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub street: String,
    #[serde(default)]
    pub directed: bool,
    /// Optional surveyed length; checked against the geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockDoc {
    pub id: String,
    pub edge: String,
    pub usable_length: f64,
    #[serde(default)]
    pub prohibited: Vec<Span>,
    #[serde(default)]
    pub garages: Vec<Span>,
    #[serde(default)]
    pub metered: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GazetteerDoc {
    pub key: String,
    pub kind: PlaceKind,
    pub lat: f64,
    pub lon: f64,
}

// ---------------------------------------------------------------------------
// graph

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Traversal {
    pub edge: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityGraph {
    nodes: Vec<Node>,
    node_index: HashMap<String, usize>,
    edges: Vec<StreetSegment>,
    edge_index: HashMap<String, usize>,
    edge_ends: Vec<(usize, usize)>,
    outgoing: Vec<Vec<Traversal>>,
    incoming: Vec<Vec<Traversal>>,
    blocks: Vec<Block>,
    block_index: HashMap<String, usize>,
    gazetteer: Gazetteer,
    warnings: Vec<String>,
    origin: Option<GeoPoint>,
}

/// Assembles a [`CityGraph`] from planar coordinates.
#[derive(Debug, Clone, Default)]
pub struct CityBuilder {
    nodes: Vec<Node>,
    edges: Vec<(String, String, String, String, bool, Option<f64>)>,
    blocks: Vec<BlockDoc>,
    places: Vec<(String, Coordinate, PlaceKind)>,
    slot_length: Option<f64>,
    origin: Option<GeoPoint>,
}

impl CityBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn slot_length(mut self, slot_length: f64) -> Self {
        self.slot_length = Some(slot_length);
        self
    }

    pub fn node(mut self, id: &str, x: f64, y: f64) -> Self {
        self.nodes.push(Node {
            id: id.to_string(),
            coordinate: Coordinate::new(x, y),
        });
        self
    }

    pub fn edge(mut self, id: &str, from: &str, to: &str, street: &str, directed: bool) -> Self {
        self.edges.push((
            id.into(),
            from.into(),
            to.into(),
            street.into(),
            directed,
            None,
        ));
        self
    }

    pub fn block(mut self, block: BlockDoc) -> Self {
        self.blocks.push(block);
        self
    }

    pub fn place(mut self, key: &str, at: Coordinate, kind: PlaceKind) -> Self {
        self.places.push((key.into(), at, kind));
        self
    }

    pub fn build(self) -> Result<CityGraph, CityError> {
        let slot_length = self.slot_length.unwrap_or(DEFAULT_SLOT_LENGTH);
        let mut warnings = Vec::new();

        let mut nodes = self.nodes;
        for n in &nodes {
            if !n.coordinate.is_finite() {
                return Err(CityError::NonFinite { id: n.id.clone() });
            }
        }
        // node index order == id order, which routing uses for tie-breaks
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(CityError::DuplicateId {
                    kind: "node",
                    id: n.id.clone(),
                });
            }
        }

        let mut raw_edges = self.edges;
        raw_edges.sort_by(|a, b| a.0.cmp(&b.0));
        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut edge_index = HashMap::with_capacity(raw_edges.len());
        let mut edge_ends = Vec::with_capacity(raw_edges.len());
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (id, from, to, street, directed, declared) in raw_edges {
            let fi = *node_index
                .get(&from)
                .ok_or_else(|| CityError::DanglingEndpoint {
                    edge: id.clone(),
                    node: from.clone(),
                })?;
            let ti = *node_index
                .get(&to)
                .ok_or_else(|| CityError::DanglingEndpoint {
                    edge: id.clone(),
                    node: to.clone(),
                })?;
            let geometric = nodes[fi].coordinate.distance(&nodes[ti].coordinate);
            let length = match declared {
                Some(l) if !l.is_finite() => return Err(CityError::NonFinite { id }),
                Some(l) if l <= 0.0 => {
                    return Err(CityError::NonPositiveLength { edge: id, length: l })
                }
                Some(l) => {
                    if (l - geometric).abs() > LENGTH_TOLERANCE * geometric {
                        warnings.push(format!(
                            "edge {id}: declared length {l:.2} m differs from geometry {geometric:.2} m"
                        ));
                    }
                    l
                }
                None => geometric,
            };
            if length <= 0.0 {
                return Err(CityError::NonPositiveLength { edge: id, length });
            }
            let idx = edges.len();
            if edge_index.insert(id.clone(), idx).is_some() {
                return Err(CityError::DuplicateId { kind: "edge", id });
            }
            outgoing[fi].push(Traversal { edge: idx, to: ti });
            if !directed {
                outgoing[ti].push(Traversal { edge: idx, to: fi });
            }
            edge_ends.push((fi, ti));
            edges.push(StreetSegment {
                id,
                from,
                to,
                street_name: street,
                length,
                directed,
            });
        }
        for out in &mut outgoing {
            out.sort_by_key(|a| (a.to, a.edge));
        }
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (u, arcs) in outgoing.iter().enumerate() {
            for a in arcs {
                incoming[a.to].push(Traversal { edge: a.edge, to: u });
            }
        }

        let mut raw_blocks = self.blocks;
        raw_blocks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut blocks = Vec::with_capacity(raw_blocks.len());
        let mut block_index = HashMap::with_capacity(raw_blocks.len());
        for b in raw_blocks {
            let Some(&ei) = edge_index.get(&b.edge) else {
                return Err(CityError::UnknownEdge {
                    block: b.id,
                    edge: b.edge,
                });
            };
            if !b.usable_length.is_finite() || b.usable_length < 0.0 {
                return Err(CityError::NonPositiveLength {
                    edge: b.id,
                    length: b.usable_length,
                });
            }
            for &(start, end) in b.prohibited.iter().chain(&b.garages) {
                if !(start.is_finite() && end.is_finite())
                    || start < 0.0
                    || end < start
                    || end > b.usable_length
                {
                    return Err(CityError::InvalidSpan {
                        block: b.id,
                        start,
                        end,
                        usable_length: b.usable_length,
                    });
                }
            }
            let seg_len = edges[ei].length;
            if b.usable_length > seg_len * (1.0 + LENGTH_TOLERANCE) {
                warnings.push(format!(
                    "block {}: usable length {:.2} m exceeds segment length {:.2} m",
                    b.id, b.usable_length, seg_len
                ));
            }
            let capacity = derive_capacity(b.usable_length, &b.prohibited, &b.garages, slot_length);
            let idx = blocks.len();
            if block_index.insert(b.id.clone(), idx).is_some() {
                return Err(CityError::DuplicateId {
                    kind: "block",
                    id: b.id,
                });
            }
            blocks.push(Block {
                id: b.id,
                segment: b.edge,
                usable_length: b.usable_length,
                prohibited_spans: b.prohibited,
                garage_spans: b.garages,
                capacity,
                in_metered_zone: b.metered,
            });
        }

        let mut gazetteer = Gazetteer::new();
        for (key, at, kind) in self.places {
            gazetteer.register(&key, at, kind)?;
        }

        let mut graph = CityGraph {
            nodes,
            node_index,
            edges,
            edge_index,
            edge_ends,
            outgoing,
            incoming,
            blocks,
            block_index,
            gazetteer,
            warnings,
            origin: self.origin,
        };
        if !graph.is_strongly_connected() {
            graph
                .warnings
                .push("street graph is not strongly connected".to_string());
        }
        if let Some((lo, hi)) = graph.bounds() {
            for e in graph.gazetteer.entries() {
                let c = e.coordinate;
                if c.x < lo.x - BOUNDS_MARGIN_M
                    || c.y < lo.y - BOUNDS_MARGIN_M
                    || c.x > hi.x + BOUNDS_MARGIN_M
                    || c.y > hi.y + BOUNDS_MARGIN_M
                {
                    let msg = format!("gazetteer entry {:?} lies outside the city bounds", e.key);
                    graph.warnings.push(msg);
                }
            }
        }
        Ok(graph)
    }
}

impl MapDocument {
    pub fn into_graph(self, slot_length: f64) -> Result<CityGraph, CityError> {
        let origin = self.origin;
        if !(origin.lat.is_finite() && origin.lon.is_finite()) {
            return Err(CityError::NonFinite {
                id: "origin".into(),
            });
        }
        let mut b = CityBuilder::new().slot_length(slot_length);
        b.origin = Some(origin);
        for n in self.nodes {
            if !(n.lat.is_finite() && n.lon.is_finite()) {
                return Err(CityError::NonFinite { id: n.id });
            }
            let c = origin.project(GeoPoint {
                lat: n.lat,
                lon: n.lon,
            });
            b = b.node(&n.id, c.x, c.y);
        }
        for e in self.edges {
            b.edges
                .push((e.id, e.from, e.to, e.street, e.directed, e.length));
        }
        b.blocks = self.blocks;
        for g in self.gazetteer {
            let c = origin.project(GeoPoint {
                lat: g.lat,
                lon: g.lon,
            });
            b = b.place(&g.key, c, g.kind);
        }
        b.build()
    }
}

/// Parses and validates a city-map JSON document.
pub fn load_city(json: &str, slot_length: f64) -> Result<CityGraph, CityError> {
    let doc: MapDocument =
        serde_json::from_str(json).map_err(|e| CityError::Schema(e.to_string()))?;
    doc.into_graph(slot_length)
}

pub fn load_city_file(path: impl AsRef<Path>, slot_length: f64) -> Result<CityGraph, CityError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CityError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_city(&text, slot_length)
}

impl CityGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[StreetSegment] {
        &self.edges
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn origin(&self) -> Option<GeoPoint> {
        self.origin
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn edge_idx(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.node_idx(id).map(|i| &self.nodes[i])
    }

    pub fn edge(&self, id: &str) -> Option<&StreetSegment> {
        self.edge_idx(id).map(|i| &self.edges[i])
    }

    pub fn block(&self, id: &str) -> Option<&Block> {
        self.block_index.get(id).map(|&i| &self.blocks[i])
    }

    /// Outgoing traversals from node index `from`, sorted by (target, edge).
    pub fn arcs(&self, from: usize) -> &[Traversal] {
        &self.outgoing[from]
    }

    /// Traversals arriving at node index `to`; `Traversal::to` holds the
    /// source node here.
    pub fn arcs_into(&self, to: usize) -> &[Traversal] {
        &self.incoming[to]
    }

    /// Node indices of the edge's declared endpoints.
    pub fn edge_ends(&self, edge: usize) -> (usize, usize) {
        self.edge_ends[edge]
    }

    pub fn edge_endpoints(&self, edge: usize) -> (Coordinate, Coordinate) {
        let (a, b) = self.edge_ends[edge];
        (self.nodes[a].coordinate, self.nodes[b].coordinate)
    }

    pub fn edge_midpoint(&self, edge: usize) -> Coordinate {
        let (a, b) = self.edge_endpoints(edge);
        Coordinate::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)
    }

    pub fn block_midpoint(&self, block: &Block) -> Coordinate {
        self.edge_midpoint(self.edge_index[&block.segment])
    }

    /// Bounding box of all nodes as (min, max) corners.
    pub fn bounds(&self) -> Option<(Coordinate, Coordinate)> {
        let first = self.nodes.first()?.coordinate;
        Some(self.nodes.iter().fold((first, first), |(lo, hi), n| {
            let c = n.coordinate;
            (
                Coordinate::new(lo.x.min(c.x), lo.y.min(c.y)),
                Coordinate::new(hi.x.max(c.x), hi.y.max(c.y)),
            )
        }))
    }

    fn reachable_from(&self, start: usize, reverse: bool) -> Vec<bool> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for (u, arcs) in self.outgoing.iter().enumerate() {
            for a in arcs {
                if reverse {
                    adj[a.to].push(u);
                } else {
                    adj[u].push(a.to);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        self.reachable_from(0, false).iter().all(|&b| b)
            && self.reachable_from(0, true).iter().all(|&b| b)
    }

    /// Blocks whose segment midpoint lies within `radius` of `at`, nearest
    /// first, ties by block id.
    pub fn nearest_blocks(&self, at: Coordinate, radius: f64) -> Vec<(&Block, f64)> {
        if !(radius > 0.0) {
            return Vec::new();
        }
        let mut out: Vec<(&Block, f64)> = self
            .blocks
            .iter()
            .map(|b| (b, self.block_midpoint(b).distance(&at)))
            .filter(|(_, d)| *d <= radius)
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.id.cmp(&b.0.id)));
        out
    }

    /// Free-text place lookup through the gazetteer.
    pub fn resolve_location(&self, text: &str) -> Option<Coordinate> {
        self.gazetteer.resolve_location(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> CityGraph {
        CityBuilder::new()
            .node("A", 0.0, 0.0)
            .node("B", 1.0, 0.0)
            .node("C", 1.0, 1.0)
            .node("D", 0.0, 1.0)
            .edge("ab", "A", "B", "South", false)
            .edge("bc", "B", "C", "East", false)
            .edge("cd", "C", "D", "North", false)
            .edge("da", "D", "A", "West", false)
            .build()
            .unwrap()
    }

    #[test]
    fn builds_unit_square() {
        let g = unit_square();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 4);
        assert!(g.warnings().is_empty());
        assert_eq!(g.edge("bc").unwrap().length, 1.0);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(derive_capacity(100.0, &[], &[], 5.0), 20);
        assert_eq!(derive_capacity(100.0, &[(0.0, 100.0)], &[], 5.0), 0);
        assert_eq!(
            derive_capacity(50.0, &[(0.0, 10.0), (5.0, 15.0)], &[(40.0, 45.0)], 5.0),
            6
        );
        assert_eq!(derive_capacity(100.0, &[], &[], 0.0), 0);
        assert_eq!(derive_capacity(0.0, &[], &[], 5.0), 0);
    }

    #[test]
    fn union_merges_nested_and_touching() {
        assert_eq!(union_length([(0.0, 10.0), (2.0, 3.0), (10.0, 12.0)], 100.0), 12.0);
        assert_eq!(union_length([(90.0, 120.0)], 100.0), 10.0);
        assert_eq!(union_length([], 100.0), 0.0);
    }

    #[test]
    fn dangling_endpoint_names_node() {
        let err = CityBuilder::new()
            .node("n1", 0.0, 0.0)
            .edge("e1", "n1", "n99", "X", false)
            .build()
            .unwrap_err();
        assert_eq!(
            err,
            CityError::DanglingEndpoint {
                edge: "e1".into(),
                node: "n99".into()
            }
        );
        assert!(err.to_string().contains("n99"));
    }

    #[test]
    fn coincident_nodes_give_non_positive_length() {
        let err = CityBuilder::new()
            .node("a", 1.0, 1.0)
            .node("b", 1.0, 1.0)
            .edge("e", "a", "b", "X", false)
            .build()
            .unwrap_err();
        assert!(matches!(err, CityError::NonPositiveLength { .. }));
    }

    #[test]
    fn negative_declared_length_is_rejected() {
        let doc = r#"{"origin":{"lat":-37.3,"lon":-59.1},
            "nodes":[{"id":"a","lat":-37.3,"lon":-59.1},{"id":"b","lat":-37.3,"lon":-59.099}],
            "edges":[{"id":"e1","from":"a","to":"b","street":"x","length":-3.0}]}"#;
        let err = load_city(doc, 5.0).unwrap_err();
        assert!(matches!(err, CityError::NonPositiveLength { ref edge, .. } if edge == "e1"));
    }

    #[test]
    fn schema_violation() {
        assert!(matches!(
            load_city(r#"{"nodes": []}"#, 5.0),
            Err(CityError::Schema(_))
        ));
    }

    #[test]
    fn block_span_outside_usable_length() {
        let err = CityBuilder::new()
            .node("a", 0.0, 0.0)
            .node("b", 100.0, 0.0)
            .edge("e", "a", "b", "X", false)
            .block(BlockDoc {
                id: "b1".into(),
                edge: "e".into(),
                usable_length: 50.0,
                prohibited: vec![(40.0, 60.0)],
                garages: vec![],
                metered: true,
            })
            .build()
            .unwrap_err();
        assert!(matches!(err, CityError::InvalidSpan { .. }));
    }

    #[test]
    fn disconnected_graph_warns() {
        let g = CityBuilder::new()
            .node("a", 0.0, 0.0)
            .node("b", 10.0, 0.0)
            .node("c", 20.0, 0.0)
            .edge("e", "a", "b", "X", true)
            .build()
            .unwrap();
        assert_eq!(g.warnings().len(), 1);
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_key("  SAN martín  & 9 DE JULIO "), "san martin & 9 de julio");
        assert_eq!(normalize_key("Maipú&Alem"), "maipu & alem");
        assert_eq!(normalize_key("Ñandú"), "nandu");
    }

    #[test]
    fn gazetteer_lookup() {
        let mut g = Gazetteer::new();
        g.register(
            "San Martín & 9 de Julio",
            Coordinate::new(120.0, 340.0),
            PlaceKind::Intersection,
        )
        .unwrap();
        g.register("Pinto", Coordinate::new(5.0, 5.0), PlaceKind::Street)
            .unwrap();
        let want = Some(Coordinate::new(120.0, 340.0));
        assert_eq!(g.resolve_location("San Martín & 9 de Julio"), want);
        assert_eq!(g.resolve_location("  SAN martín  & 9 DE JULIO "), want);
        assert_eq!(g.resolve_location("9 de julio & san martin"), want);
        assert_eq!(g.resolve_location("calle inexistente"), None);
        assert_eq!(g.resolve_location("PINTO"), Some(Coordinate::new(5.0, 5.0)));
        assert!(matches!(
            g.register("pinto", Coordinate::new(0.0, 0.0), PlaceKind::Street),
            Err(CityError::DuplicateKey(_))
        ));
    }

    #[test]
    fn projection_round_trip() {
        let origin = GeoPoint {
            lat: -37.3217,
            lon: -59.1332,
        };
        let c = Coordinate::new(812.5, -431.0);
        let back = origin.project(origin.unproject(c));
        assert!((back.x - c.x).abs() < 1e-6 && (back.y - c.y).abs() < 1e-6);
    }

    #[test]
    fn nearest_blocks_small_and_large_radius() {
        let mut b = CityBuilder::new()
            .node("a", 0.0, 0.0)
            .node("b", 100.0, 0.0)
            .node("c", 100.0, 100.0)
            .edge("ab", "a", "b", "X", false)
            .edge("bc", "b", "c", "Y", false);
        for (id, edge) in [("k1", "ab"), ("k2", "bc")] {
            b = b.block(BlockDoc {
                id: id.into(),
                edge: edge.into(),
                usable_length: 90.0,
                prohibited: vec![],
                garages: vec![],
                metered: true,
            });
        }
        let g = b.build().unwrap();
        let near = g.nearest_blocks(Coordinate::new(50.0, 0.0), 0.1);
        assert_eq!(near.len(), 1);
        assert_eq!(near[0].0.id, "k1");
        let all = g.nearest_blocks(Coordinate::new(50.0, 0.0), 1e6);
        assert_eq!(
            all.iter().map(|(b, _)| b.id.as_str()).collect::<Vec<_>>(),
            vec!["k1", "k2"]
        );
        assert!(g.nearest_blocks(Coordinate::new(0.0, 0.0), 0.0).is_empty());
    }
}

//! Non-personalized path computation over the street graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::city::{CityGraph, Coordinate};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeoError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
    pub total_cost: f64,
    pub total_length: f64,
}

/// Per-edge costs: a base cost (edge length unless overridden) times a
/// penalty factor. A factor of `f64::INFINITY` excludes the edge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeighting {
    #[serde(default)]
    pub base: BTreeMap<String, f64>,
    #[serde(default)]
    pub penalties: BTreeMap<String, f64>,
}

pub const BLOCKED: f64 = f64::INFINITY;

impl EdgeWeighting {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn with_base(mut self, edge: &str, cost: f64) -> Self {
        self.base.insert(edge.to_string(), cost);
        self
    }

    /// Multiplies the edge's penalty; factors below 1 are raised to 1.
    pub fn penalize(&mut self, edge: &str, factor: f64) {
        let f = factor.max(1.0);
        let entry = self.penalties.entry(edge.to_string()).or_insert(1.0);
        *entry = (*entry * f).max(1.0);
    }

    /// Sets the edge's penalty to `factor` unless it is already higher.
    pub fn raise_penalty(&mut self, edge: &str, factor: f64) {
        let f = factor.max(1.0);
        let entry = self.penalties.entry(edge.to_string()).or_insert(1.0);
        if f > *entry {
            *entry = f;
        }
    }

    pub fn block(&mut self, edge: &str) {
        self.penalties.insert(edge.to_string(), BLOCKED);
    }

    pub fn is_blocked(&self, edge: &str) -> bool {
        self.penalty(edge).is_infinite()
    }

    pub fn penalty(&self, edge: &str) -> f64 {
        self.penalties.get(edge).copied().unwrap_or(1.0)
    }

    pub fn is_identity(&self) -> bool {
        self.base.is_empty() && self.penalties.values().all(|&f| f == 1.0)
    }

    /// Cost of traversing the edge, `None` when it is excluded.
    pub fn cost(&self, graph: &CityGraph, edge: usize) -> Option<f64> {
        let seg = &graph.edges()[edge];
        let factor = self.penalty(&seg.id);
        if factor.is_infinite() {
            return None;
        }
        let base = self.base.get(&seg.id).copied().unwrap_or(seg.length);
        Some(base * factor)
    }

    fn costs(&self, graph: &CityGraph) -> Vec<Option<f64>> {
        (0..graph.edge_count()).map(|e| self.cost(graph, e)).collect()
    }
}

pub fn walking_distance(a: Coordinate, b: Coordinate) -> f64 {
    a.distance(&b)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
struct IndexPath {
    nodes: Vec<usize>,
    edges: Vec<usize>,
    cost: f64,
}

impl IndexPath {
    fn rank_key(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.edges.len().cmp(&other.edges.len()))
            .then_with(|| self.nodes.cmp(&other.nodes))
            .then_with(|| self.edges.cmp(&other.edges))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    dist: f64,
    node: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Dijkstra from `origin`, skipping banned nodes and edges. Among equal-cost
/// predecessors the smaller node id wins, then the smaller edge id.
fn dijkstra(
    graph: &CityGraph,
    costs: &[Option<f64>],
    origin: usize,
    destination: usize,
    banned_nodes: &HashSet<usize>,
    banned_edges: &HashSet<usize>,
) -> Option<IndexPath> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(Queued {
        dist: 0.0,
        node: origin,
    });
    while let Some(Queued { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == destination {
            break;
        }
        for arc in graph.arcs(u) {
            if banned_edges.contains(&arc.edge) || banned_nodes.contains(&arc.to) {
                continue;
            }
            let Some(c) = costs[arc.edge] else { continue };
            let nd = d + c;
            if nd < dist[arc.to] {
                dist[arc.to] = nd;
                heap.push(Queued {
                    dist: nd,
                    node: arc.to,
                });
            }
        }
    }
    if !done[destination] {
        return None;
    }

    let mut nodes = vec![destination];
    let mut edges = Vec::new();
    let mut v = destination;
    while v != origin {
        let mut best: Option<(usize, usize)> = None;
        for arc in graph.arcs_into(v) {
            let u = arc.to;
            if !done[u] || banned_edges.contains(&arc.edge) || banned_nodes.contains(&u) {
                continue;
            }
            let Some(c) = costs[arc.edge] else { continue };
            if !nearly_equal(dist[u] + c, dist[v]) || dist[u] >= dist[v] {
                continue;
            }
            let cand = (u, arc.edge);
            best = match best {
                Some(b) if b <= cand => Some(b),
                _ => Some(cand),
            };
        }
        let (u, e) = best.expect("settled node has a tight predecessor");
        nodes.push(u);
        edges.push(e);
        v = u;
    }
    nodes.reverse();
    edges.reverse();
    let cost = path_cost(costs, &edges);
    Some(IndexPath { nodes, edges, cost })
}

fn path_cost(costs: &[Option<f64>], edges: &[usize]) -> f64 {
    edges
        .iter()
        .map(|&e| costs[e].expect("path uses only open edges"))
        .sum()
}

fn to_route(graph: &CityGraph, p: &IndexPath) -> Route {
    Route {
        nodes: p.nodes.iter().map(|&i| graph.nodes()[i].id.clone()).collect(),
        edges: p.edges.iter().map(|&e| graph.edges()[e].id.clone()).collect(),
        total_cost: p.cost,
        total_length: p.edges.iter().map(|&e| graph.edges()[e].length).sum(),
    }
}

fn resolve(graph: &CityGraph, id: &str) -> Result<usize, GeoError> {
    graph
        .node_idx(id)
        .ok_or_else(|| GeoError::UnknownNode(id.to_string()))
}

/// Minimum-cost route honoring edge direction, or `None` if unreachable.
pub fn shortest_path(
    graph: &CityGraph,
    origin: &str,
    destination: &str,
    weighting: &EdgeWeighting,
) -> Result<Option<Route>, GeoError> {
    let o = resolve(graph, origin)?;
    let d = resolve(graph, destination)?;
    let costs = weighting.costs(graph);
    let path = dijkstra(graph, &costs, o, d, &HashSet::new(), &HashSet::new());
    Ok(path.map(|p| to_route(graph, &p)))
}

/// Up to `k` loop-free routes in nondecreasing cost order (Yen's deviation
/// search over edge sequences).
pub fn k_alternative_paths(
    graph: &CityGraph,
    origin: &str,
    destination: &str,
    k: usize,
    weighting: &EdgeWeighting,
) -> Result<Vec<Route>, GeoError> {
    if k == 0 {
        return Err(GeoError::InvalidK);
    }
    let o = resolve(graph, origin)?;
    let d = resolve(graph, destination)?;
    let costs = weighting.costs(graph);
    let Some(first) = dijkstra(graph, &costs, o, d, &HashSet::new(), &HashSet::new()) else {
        return Ok(Vec::new());
    };
    let mut accepted = vec![first];
    let mut candidates: Vec<IndexPath> = Vec::new();

    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        for i in 0..prev.edges.len() {
            let spur = prev.nodes[i];
            let root_edges = &prev.edges[..i];
            let banned_edges: HashSet<usize> = accepted
                .iter()
                .filter(|p| p.edges.len() > i && p.edges[..i] == *root_edges)
                .map(|p| p.edges[i])
                .collect();
            let banned_nodes: HashSet<usize> = prev.nodes[..i].iter().copied().collect();
            let Some(tail) = dijkstra(graph, &costs, spur, d, &banned_nodes, &banned_edges)
            else {
                continue;
            };
            let mut nodes = prev.nodes[..i].to_vec();
            nodes.extend(&tail.nodes);
            let mut edges = root_edges.to_vec();
            edges.extend(&tail.edges);
            let cost = path_cost(&costs, &edges);
            let cand = IndexPath { nodes, edges, cost };
            if !accepted.iter().any(|p| p.edges == cand.edges)
                && !candidates.iter().any(|p| p.edges == cand.edges)
            {
                candidates.push(cand);
            }
        }
        let Some(best) = (0..candidates.len()).min_by(|&a, &b| candidates[a].rank_key(&candidates[b]))
        else {
            break;
        };
        accepted.push(candidates.swap_remove(best));
    }
    Ok(accepted.iter().map(|p| to_route(graph, p)).collect())
}

//! Incident-aware route recommendation: active incidents become edge
//! penalties, closures become exclusions, then alternatives are computed
//! under that weighting.

use serde::{Deserialize, Serialize};

use crate::city::{CityGraph, Coordinate};
use crate::geo::{k_alternative_paths, EdgeWeighting, GeoError, Route};
use crate::incident::{Incident, IncidentCategory, IncidentStore};

pub const DEFAULT_BLOCK_RADIUS: f64 = 60.0;
pub const DEFAULT_PENALTY_FACTOR: f64 = 5.0;
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteParams {
    pub block_radius: f64,
    pub penalty_factor: f64,
}

impl Default for RouteParams {
    fn default() -> Self {
        Self {
            block_radius: DEFAULT_BLOCK_RADIUS,
            penalty_factor: DEFAULT_PENALTY_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub origin: String,
    pub destination: String,
    pub t: i64,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecommendation {
    pub routes: Vec<Route>,
    /// Ids of the active incidents near each route, parallel to `routes`.
    pub avoided_incidents: Vec<Vec<String>>,
    /// Whether each route crosses a penalized edge.
    pub penalized: Vec<bool>,
    pub reachable: bool,
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Coordinate, a: Coordinate, b: Coordinate) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Coordinate::new(a.x + t * dx, a.y + t * dy))
}

fn edge_distance(graph: &CityGraph, edge: usize, p: Coordinate) -> f64 {
    let (a, b) = graph.edge_endpoints(edge);
    point_segment_distance(p, a, b)
}

/// Edge weighting induced by `incidents`. Every edge within `block_radius`
/// of a non-closure incident gets `factor`; a road closure excludes the
/// edge(s) closest to it, provided they are within `block_radius`.
pub fn incident_penalties(
    graph: &CityGraph,
    incidents: &[Incident],
    block_radius: f64,
    factor: f64,
) -> EdgeWeighting {
    let mut w = EdgeWeighting::identity();
    for inc in incidents {
        let dists: Vec<f64> = (0..graph.edge_count())
            .map(|e| edge_distance(graph, e, inc.location))
            .collect();
        if inc.category == IncidentCategory::RoadClosure {
            let min = dists.iter().copied().fold(f64::INFINITY, f64::min);
            if min > block_radius {
                continue;
            }
            for (e, d) in dists.iter().enumerate() {
                if *d <= min + 1e-9 {
                    w.block(&graph.edges()[e].id);
                }
            }
        } else {
            for (e, d) in dists.iter().enumerate() {
                let id = &graph.edges()[e].id;
                if *d <= block_radius && !w.is_blocked(id) {
                    w.raise_penalty(id, factor);
                }
            }
        }
    }
    w
}

/// Incidents within `block_radius` of any edge of `route`, in input order.
pub fn incidents_near_route(
    graph: &CityGraph,
    route: &Route,
    incidents: &[Incident],
    block_radius: f64,
) -> Vec<String> {
    let edges: Vec<usize> = route
        .edges
        .iter()
        .filter_map(|id| graph.edge_idx(id))
        .collect();
    incidents
        .iter()
        .filter(|inc| {
            edges
                .iter()
                .any(|&e| edge_distance(graph, e, inc.location) <= block_radius)
        })
        .map(|inc| inc.id.clone())
        .collect()
}

/// Recommendation against an explicit incident snapshot.
pub fn recommend_with(
    request: &RouteRequest,
    graph: &CityGraph,
    active: &[Incident],
    params: RouteParams,
) -> Result<RouteRecommendation, GeoError> {
    let weighting = incident_penalties(graph, active, params.block_radius, params.penalty_factor);
    let routes = k_alternative_paths(
        graph,
        &request.origin,
        &request.destination,
        request.k,
        &weighting,
    )?;
    let avoided_incidents = routes
        .iter()
        .map(|r| incidents_near_route(graph, r, active, params.block_radius))
        .collect();
    let penalized = routes
        .iter()
        .map(|r| r.edges.iter().any(|e| weighting.penalty(e) > 1.0))
        .collect();
    Ok(RouteRecommendation {
        reachable: !routes.is_empty(),
        routes,
        avoided_incidents,
        penalized,
    })
}

/// Recommendation using the incidents active at `request.t`.
pub fn recommend(
    request: &RouteRequest,
    graph: &CityGraph,
    store: &IncidentStore,
    params: RouteParams,
) -> Result<RouteRecommendation, GeoError> {
    let active = store.active_incidents(request.t);
    recommend_with(request, graph, &active, params)
}

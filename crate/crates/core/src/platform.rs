//! The assembled platform: one bus, the city model and the services wired
//! to it. Submissions go onto the bus and are pumped into the services;
//! queries read a consistent snapshot.

use std::fmt;
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusError, Message, MessageBus, Subscription, Topic};
use crate::city::{load_city_file, CityError, CityGraph, Coordinate, MapDocument};
use crate::config::{ClassifierSource, ConfigError, PlatformConfig, Thresholds};
use crate::geo::GeoError;
use crate::incident::{
    train_classifier, ClassifierModel, DetectorConfig, DetectorMetrics, Incident,
    IncidentDetector, IncidentError, IncidentStore, Label, TextReport, TOPIC_INCIDENTS,
    TOPIC_REPORTS,
};
use crate::parking::{
    rank_blocks, AnomalyCounts, BlockOccupancy, OccupancyHistory, ParkingError, ParkingEvent,
    ParkingState, PredictionRanking, RankingParams, TOPIC_PARKING_EVENTS,
};
use crate::route::{recommend, RouteParams, RouteRecommendation, RouteRequest};
use crate::simulator::{from_ndjson, labeled_corpus, SimulationConfig, Templates};

pub const MAX_K: usize = 10;
pub const MAX_RADIUS: f64 = 5_000.0;

// ---------------------------------------------------------------------------
// errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    InvalidParameter,
    NotFound,
    NodeNotFound,
    BlockNotFound,
    UnmeteredBlock,
    InvalidReport,
    DuplicateReport,
    MethodNotAllowed,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::BadRequest | ErrorCode::InvalidParameter | ErrorCode::InvalidReport => 400,
            ErrorCode::NotFound | ErrorCode::NodeNotFound | ErrorCode::BlockNotFound => 404,
            ErrorCode::MethodNotAllowed => 405,
            ErrorCode::DuplicateReport => 409,
            ErrorCode::UnmeteredBlock => 422,
            ErrorCode::Internal => 500,
        }
    }
}

/// Error body returned by every service call and HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
pub struct ApiError {
    pub http_status: u16,
    pub code: ErrorCode,
    pub message: String,
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:?}): {}", self.http_status, self.code, self.message)
    }
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            http_status: code.http_status(),
            code,
            message: message.into(),
        }
    }

    pub fn invalid(name: &str, detail: impl fmt::Display) -> Self {
        Self::new(ErrorCode::InvalidParameter, format!("{name}: {detail}"))
    }
}

impl From<GeoError> for ApiError {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::UnknownNode(_) => ApiError::new(ErrorCode::NodeNotFound, e.to_string()),
            GeoError::InvalidK => ApiError::invalid("k", e),
        }
    }
}

impl From<ParkingError> for ApiError {
    fn from(e: ParkingError) -> Self {
        let code = match e {
            ParkingError::UnknownBlock(_) => ErrorCode::BlockNotFound,
            ParkingError::UnmeteredBlock(_) | ParkingError::ZeroCapacity(_) => {
                ErrorCode::UnmeteredBlock
            }
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<IncidentError> for ApiError {
    fn from(e: IncidentError) -> Self {
        let code = match e {
            IncidentError::EmptyText(_) => ErrorCode::InvalidReport,
            IncidentError::Duplicate(_) => ErrorCode::DuplicateReport,
            IncidentError::Bus(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<BusError> for ApiError {
    fn from(e: BusError) -> Self {
        ApiError::new(ErrorCode::Internal, e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("city map: {0}")]
    City(#[from] CityError),
    #[error("classifier: {0}")]
    Classifier(String),
    #[error("simulator: {0}")]
    Simulator(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

// ---------------------------------------------------------------------------
// views

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockView {
    pub id: String,
    pub segment: String,
    pub street_name: String,
    pub midpoint: Coordinate,
    pub capacity: u32,
    pub in_metered_zone: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<BlockOccupancy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub report_id: String,
    pub seq: u64,
    pub incident: Option<Incident>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PumpCounters {
    pub parking_applied: u64,
    pub parking_rejected: u64,
    pub reports_processed: u64,
    pub reports_rejected: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub components: HealthComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthComponents {
    pub bus: BusHealth,
    pub city: CityHealth,
    pub classifier: ClassifierHealth,
    pub incidents: IncidentHealth,
    pub parking: ParkingHealth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusHealth {
    pub status: String,
    pub topics: Vec<Topic>,
    pub pump: PumpCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityHealth {
    pub status: String,
    pub nodes: usize,
    pub edges: usize,
    pub blocks: usize,
    pub places: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHealth {
    pub status: String,
    pub labels: Vec<Label>,
    pub vocabulary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentHealth {
    pub status: String,
    pub stored: usize,
    pub detector: DetectorMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingHealth {
    pub status: String,
    pub metered_blocks: usize,
    pub events_applied: u64,
    pub anomalies: AnomalyCounts,
    pub history_buckets: usize,
}

const OK: &str = "ok";

// ---------------------------------------------------------------------------
// platform

#[derive(Debug)]
struct ParkingBook {
    state: ParkingState,
    history: OccupancyHistory,
}

#[derive(Debug)]
struct Pump {
    parking: Subscription,
    reports: Subscription,
    counters: PumpCounters,
}

/// Per-message result of a pump pass.
#[derive(Debug, Clone, PartialEq)]
pub enum PumpOutcome {
    Parking {
        seq: u64,
        result: Result<BlockOccupancy, ParkingError>,
    },
    Report {
        seq: u64,
        result: Result<Option<Incident>, IncidentError>,
    },
    Malformed {
        topic: String,
        seq: u64,
        error: String,
    },
}

#[derive(Debug)]
pub struct Platform {
    graph: CityGraph,
    bus: MessageBus,
    detector: IncidentDetector,
    incidents: IncidentStore,
    parking: RwLock<ParkingBook>,
    pump: Mutex<Pump>,
    thresholds: Thresholds,
    simulation: SimulationConfig,
    templates: Templates,
}

#[derive(Deserialize)]
struct CorpusRecord {
    text: String,
    label: Label,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Platform {
    pub fn new(
        graph: CityGraph,
        model: ClassifierModel,
        thresholds: Thresholds,
        simulation: SimulationConfig,
        templates: Templates,
    ) -> Result<Self, PlatformError> {
        thresholds.validate()?;
        let bus = MessageBus::new();
        for topic in [TOPIC_PARKING_EVENTS, TOPIC_REPORTS, TOPIC_INCIDENTS] {
            bus.create_topic(topic)?;
        }
        let pump = Pump {
            parking: bus.subscribe(TOPIC_PARKING_EVENTS, 0)?,
            reports: bus.subscribe(TOPIC_REPORTS, 0)?,
            counters: PumpCounters::default(),
        };
        let detector = IncidentDetector::new(
            model,
            DetectorConfig {
                confidence_threshold: thresholds.confidence,
                durations: thresholds.durations.clone(),
            },
        );
        let state = ParkingState::for_graph(&graph);
        Ok(Self {
            graph,
            bus,
            detector,
            incidents: IncidentStore::new(),
            parking: RwLock::new(ParkingBook {
                state,
                history: OccupancyHistory::new(),
            }),
            pump: Mutex::new(pump),
            thresholds,
            simulation,
            templates,
        })
    }

    pub fn from_config(config: &PlatformConfig) -> Result<Self, PlatformError> {
        config.validate()?;
        let slot = config.thresholds.slot_length;
        let graph = match &config.gazetteer {
            None => load_city_file(&config.map, slot)?,
            Some(g) => {
                let mut doc: MapDocument = serde_json::from_str(&read(&config.map)?)
                    .map_err(|e| CityError::Schema(e.to_string()))?;
                doc.gazetteer = serde_json::from_str(&read(g)?)
                    .map_err(|e| CityError::Schema(format!("gazetteer: {e}")))?;
                doc.into_graph(slot)?
            }
        };
        let simulation = match &config.simulator {
            Some(p) => SimulationConfig::from_json(&read(p)?)
                .map_err(|e| PlatformError::Simulator(e.to_string()))?,
            None => SimulationConfig::default(),
        };
        let templates = match &config.templates {
            Some(p) => Templates::from_json(&read(p)?)
                .map_err(|e| PlatformError::Simulator(e.to_string()))?,
            None => Templates::builtin(),
        };
        let alpha = config.thresholds.smoothing_alpha;
        let model = match &config.classifier {
            ClassifierSource::Model(p) => ClassifierModel::from_json(&read(p)?)
                .map_err(|e| PlatformError::Classifier(e.to_string()))?,
            ClassifierSource::Corpus(p) => {
                let records: Vec<CorpusRecord> = from_ndjson(&read(p)?)
                    .map_err(|e| PlatformError::Classifier(e.to_string()))?;
                let corpus: Vec<(String, Label)> =
                    records.into_iter().map(|r| (r.text, r.label)).collect();
                train_classifier(&corpus, alpha)
                    .map_err(|e| PlatformError::Classifier(e.to_string()))?
            }
            ClassifierSource::Generate { n } => {
                let corpus = labeled_corpus(&simulation, graph.gazetteer(), &templates, *n)
                    .map_err(|e| PlatformError::Simulator(e.to_string()))?;
                train_classifier(&corpus, alpha)
                    .map_err(|e| PlatformError::Classifier(e.to_string()))?
            }
        };
        Self::new(graph, model, config.thresholds.clone(), simulation, templates)
    }

    pub fn graph(&self) -> &CityGraph {
        &self.graph
    }

    pub fn bus(&self) -> &MessageBus {
        &self.bus
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn simulation(&self) -> &SimulationConfig {
        &self.simulation
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn detector(&self) -> &IncidentDetector {
        &self.detector
    }

    pub fn incidents(&self) -> &IncidentStore {
        &self.incidents
    }

    pub fn pump_counters(&self) -> PumpCounters {
        self.pump.lock().unwrap().counters
    }

    // -- ingestion ---------------------------------------------------------

    /// Feeds every pending bus message into the services, in topic order.
    pub fn pump(&self) -> Vec<PumpOutcome> {
        let mut pump = self.pump.lock().unwrap();
        self.pump_locked(&mut pump)
    }

    fn pump_locked(&self, pump: &mut Pump) -> Vec<PumpOutcome> {
        let mut out = Vec::new();
        let parking = pump.parking.drain();
        if !parking.is_empty() {
            let mut book = self.parking.write().unwrap();
            for msg in parking {
                match decode::<ParkingEvent>(&msg) {
                    Ok(event) => {
                        let result = book.state.apply_checked(&self.graph, &event);
                        if result.is_ok() {
                            pump.counters.parking_applied += 1;
                        } else {
                            pump.counters.parking_rejected += 1;
                        }
                        out.push(PumpOutcome::Parking {
                            seq: msg.seq,
                            result,
                        });
                    }
                    Err(error) => {
                        pump.counters.malformed += 1;
                        out.push(PumpOutcome::Malformed {
                            topic: msg.topic.clone(),
                            seq: msg.seq,
                            error,
                        });
                    }
                }
            }
        }
        for msg in pump.reports.drain() {
            match decode::<TextReport>(&msg) {
                Ok(report) => {
                    let result = self.detector.ingest_report(
                        &report,
                        self.graph.gazetteer(),
                        &self.incidents,
                        Some(&self.bus),
                    );
                    if result.is_ok() {
                        pump.counters.reports_processed += 1;
                    } else {
                        pump.counters.reports_rejected += 1;
                    }
                    out.push(PumpOutcome::Report {
                        seq: msg.seq,
                        result,
                    });
                }
                Err(error) => {
                    pump.counters.malformed += 1;
                    out.push(PumpOutcome::Malformed {
                        topic: msg.topic.clone(),
                        seq: msg.seq,
                        error,
                    });
                }
            }
        }
        out
    }

    /// Publishes one meter event and applies it.
    pub fn submit_parking_event(&self, event: &ParkingEvent) -> Result<BlockOccupancy, ApiError> {
        match self.graph.block(&event.block) {
            None => return Err(ParkingError::UnknownBlock(event.block.clone()).into()),
            Some(b) if !b.in_metered_zone => {
                return Err(ParkingError::UnmeteredBlock(b.id.clone()).into())
            }
            Some(_) => {}
        }
        let mut pump = self.pump.lock().unwrap();
        let seq = self
            .bus
            .publish_json(TOPIC_PARKING_EVENTS, event, event.timestamp)?;
        for outcome in self.pump_locked(&mut pump) {
            if let PumpOutcome::Parking { seq: s, result } = outcome {
                if s == seq {
                    return result.map_err(ApiError::from);
                }
            }
        }
        Err(ApiError::new(ErrorCode::Internal, "event was not consumed"))
    }

    /// Publishes one report and runs it through detection.
    pub fn submit_report(&self, report: &TextReport) -> Result<ReportOutcome, ApiError> {
        if report.text.trim().is_empty() {
            return Err(IncidentError::EmptyText(report.id.clone()).into());
        }
        if report.id.is_empty() {
            return Err(ApiError::new(ErrorCode::InvalidReport, "report id is empty"));
        }
        let mut pump = self.pump.lock().unwrap();
        let seq = self.bus.publish_json(TOPIC_REPORTS, report, report.timestamp)?;
        for outcome in self.pump_locked(&mut pump) {
            if let PumpOutcome::Report { seq: s, result } = outcome {
                if s == seq {
                    return Ok(ReportOutcome {
                        report_id: report.id.clone(),
                        seq,
                        incident: result?,
                    });
                }
            }
        }
        Err(ApiError::new(ErrorCode::Internal, "report was not consumed"))
    }

    /// Folds the live state of every block into the history at `t`.
    pub fn record_snapshot(&self, t: i64) {
        let mut book = self.parking.write().unwrap();
        let ParkingBook { state, history } = &mut *book;
        history.record_all(state, t);
    }

    /// Folds an externally replayed state into the history at `t`.
    pub fn record_external_snapshot(&self, state: &ParkingState, t: i64) {
        self.parking.write().unwrap().history.record_all(state, t);
    }

    /// Runs `f` against the parking state and history under one read lock.
    pub fn with_parking<R>(&self, f: impl FnOnce(&ParkingState, &OccupancyHistory) -> R) -> R {
        let book = self.parking.read().unwrap();
        f(&book.state, &book.history)
    }

    // -- queries -----------------------------------------------------------

    pub fn health(&self) -> Health {
        let pump = self.pump_counters();
        let model = self.detector.model();
        let (metered_blocks, events_applied, anomalies, history_buckets) =
            self.with_parking(|s, h| (s.blocks().count(), s.events_applied(), s.anomalies(), h.len()));
        Health {
            status: OK.into(),
            components: HealthComponents {
                bus: BusHealth {
                    status: OK.into(),
                    topics: self.bus.topics(),
                    pump,
                },
                city: CityHealth {
                    status: OK.into(),
                    nodes: self.graph.node_count(),
                    edges: self.graph.edge_count(),
                    blocks: self.graph.blocks().len(),
                    places: self.graph.gazetteer().len(),
                    warnings: self.graph.warnings().to_vec(),
                },
                classifier: ClassifierHealth {
                    status: OK.into(),
                    labels: model.labels.clone(),
                    vocabulary: model.vocabulary.len(),
                },
                incidents: IncidentHealth {
                    status: OK.into(),
                    stored: self.incidents.len(),
                    detector: self.detector.metrics(),
                },
                parking: ParkingHealth {
                    status: OK.into(),
                    metered_blocks,
                    events_applied,
                    anomalies,
                    history_buckets,
                },
            },
        }
    }

    pub fn blocks(&self) -> Vec<BlockView> {
        self.with_parking(|state, _| {
            self.graph
                .blocks()
                .iter()
                .map(|b| self.block_view(b, state))
                .collect()
        })
    }

    pub fn block(&self, id: &str) -> Result<BlockView, ApiError> {
        let b = self
            .graph
            .block(id)
            .ok_or_else(|| ApiError::from(ParkingError::UnknownBlock(id.to_string())))?;
        Ok(self.with_parking(|state, _| self.block_view(b, state)))
    }

    fn block_view(&self, b: &crate::city::Block, state: &ParkingState) -> BlockView {
        let segment = self.graph.edge(&b.segment).expect("block segment exists");
        BlockView {
            id: b.id.clone(),
            segment: b.segment.clone(),
            street_name: segment.street_name.clone(),
            midpoint: self.graph.block_midpoint(b),
            capacity: b.capacity,
            in_metered_zone: b.in_metered_zone,
            occupancy: state.get(&b.id).cloned(),
        }
    }

    pub fn active_incidents(&self, t: i64) -> Vec<Incident> {
        self.incidents.active_incidents(t)
    }

    pub fn ranking(&self, x: f64, y: f64, radius: f64, t: i64) -> Result<PredictionRanking, ApiError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(ApiError::invalid("x/y", "coordinates must be finite"));
        }
        if !(radius > 0.0 && radius <= MAX_RADIUS) {
            return Err(ApiError::invalid("radius", format!("must lie in (0, {MAX_RADIUS}]")));
        }
        let params = RankingParams {
            alpha: self.thresholds.alpha,
            lambda: self.thresholds.lambda,
        };
        Ok(self.with_parking(|state, history| {
            rank_blocks(
                &self.graph,
                history,
                state,
                Coordinate::new(x, y),
                radius,
                t,
                params,
            )
        }))
    }

    pub fn routes(&self, from: &str, to: &str, t: i64, k: usize) -> Result<RouteRecommendation, ApiError> {
        if !(1..=MAX_K).contains(&k) {
            return Err(ApiError::invalid("k", format!("must lie in [1, {MAX_K}]")));
        }
        let request = RouteRequest {
            origin: from.to_string(),
            destination: to.to_string(),
            t,
            k,
        };
        let params = RouteParams {
            block_radius: self.thresholds.block_radius,
            penalty_factor: self.thresholds.penalty_factor,
        };
        Ok(recommend(&request, &self.graph, &self.incidents, params)?)
    }
}

fn decode<T: for<'de> Deserialize<'de>>(msg: &Message) -> Result<T, String> {
    serde_json::from_slice(&msg.payload).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::{BlockDoc, CityBuilder, PlaceKind};
    use crate::incident::{IncidentCategory, ReportSource};
    use crate::parking::EventKind;

    fn platform() -> Platform {
        let mut b = CityBuilder::new()
            .node("a", 0.0, 0.0)
            .node("b", 100.0, 0.0)
            .node("c", 100.0, 100.0)
            .edge("ab", "a", "b", "Pinto", false)
            .edge("bc", "b", "c", "Mitre", false)
            .place("pinto", Coordinate::new(50.0, 0.0), PlaceKind::Street)
            .place("mitre", Coordinate::new(100.0, 50.0), PlaceKind::Street);
        for (id, edge, metered) in [("k1", "ab", true), ("k2", "bc", false)] {
            b = b.block(BlockDoc {
                id: id.into(),
                edge: edge.into(),
                usable_length: 20.0,
                prohibited: vec![],
                garages: vec![],
                metered,
            });
        }
        let corpus = vec![
            ("choque fuerte".to_string(), Label::Accident),
            ("lindo dia".to_string(), Label::NonIncident),
        ];
        Platform::new(
            b.build().unwrap(),
            train_classifier(&corpus, 1.0).unwrap(),
            Thresholds::default(),
            SimulationConfig::default(),
            Templates::builtin(),
        )
        .unwrap()
    }

    fn event(id: &str, block: &str, kind: EventKind, t: i64) -> ParkingEvent {
        ParkingEvent {
            id: id.into(),
            block: block.into(),
            kind,
            timestamp: t,
        }
    }

    #[test]
    fn parking_submission_updates_state() {
        let p = platform();
        let occ = p
            .submit_parking_event(&event("e1", "k1", EventKind::CheckIn, 10))
            .unwrap();
        assert_eq!((occ.occupied, occ.capacity), (1, 4));
        assert_eq!(p.block("k1").unwrap().occupancy.unwrap().occupied, 1);
        assert_eq!(p.bus().topic(TOPIC_PARKING_EVENTS).unwrap().next_seq, 1);
    }

    #[test]
    fn parking_submission_errors() {
        let p = platform();
        let e = p
            .submit_parking_event(&event("e1", "zz", EventKind::CheckIn, 0))
            .unwrap_err();
        assert_eq!((e.http_status, e.code), (404, ErrorCode::BlockNotFound));
        let e = p
            .submit_parking_event(&event("e1", "k2", EventKind::CheckIn, 0))
            .unwrap_err();
        assert_eq!(e.code, ErrorCode::UnmeteredBlock);
        // nothing reached the bus
        assert_eq!(p.bus().topic(TOPIC_PARKING_EVENTS).unwrap().next_seq, 0);
    }

    #[test]
    fn report_submission_detects() {
        let p = platform();
        let report = TextReport {
            id: "r1".into(),
            text: "choque fuerte en pinto".into(),
            timestamp: 1_000,
            source: ReportSource::Social,
            category: None,
        };
        let out = p.submit_report(&report).unwrap();
        let inc = out.incident.unwrap();
        assert_eq!(inc.category, IncidentCategory::Accident);
        assert_eq!(p.active_incidents(1_000), vec![inc]);
        let dup = p.submit_report(&report).unwrap_err();
        assert_eq!(dup.code, ErrorCode::DuplicateReport);
        assert_eq!(p.bus().topic(TOPIC_INCIDENTS).unwrap().next_seq, 1);
    }

    #[test]
    fn query_validation() {
        let p = platform();
        assert_eq!(p.routes("a", "zz", 0, 3).unwrap_err().code, ErrorCode::NodeNotFound);
        assert_eq!(p.routes("a", "c", 0, 0).unwrap_err().code, ErrorCode::InvalidParameter);
        assert_eq!(p.ranking(0.0, 0.0, -1.0, 0).unwrap_err().http_status, 400);
        assert_eq!(p.block("nope").unwrap_err().code, ErrorCode::BlockNotFound);
        assert!(p.routes("a", "c", 0, 3).unwrap().reachable);
    }

    #[test]
    fn health_lists_components() {
        let p = platform();
        let h = p.health();
        assert_eq!(h.status, "ok");
        assert_eq!(h.components.city.nodes, 3);
        assert_eq!(h.components.parking.metered_blocks, 1);
        assert_eq!(h.components.bus.topics.len(), 3);
    }

    #[test]
    fn malformed_bus_payload_is_counted() {
        let p = platform();
        p.bus()
            .publish(TOPIC_PARKING_EVENTS, "application/json", b"{oops".to_vec(), 0)
            .unwrap();
        let out = p.pump();
        assert!(matches!(out[0], PumpOutcome::Malformed { .. }));
        assert_eq!(p.pump_counters().malformed, 1);
    }
}

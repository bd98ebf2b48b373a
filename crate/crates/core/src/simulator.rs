//! Seeded stand-ins for the meter feed and the citizen report stream. Every
//! output is a pure function of the configuration and the city, and the
//! simulators expose the ground truth they generated from.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::{BusError, MessageBus};
use crate::city::{CityGraph, Coordinate, Gazetteer, PlaceKind};
use crate::incident::{IncidentCategory, Label, ReportSource, TextReport, TOPIC_REPORTS};
use crate::parking::{EventKind, ParkingEvent, TimeBucket, SLOTS_PER_DAY, TOPIC_PARKING_EVENTS};

/// 2024-01-01T00:00:00Z, a Monday.
pub const DEFAULT_START_MS: i64 = 1_704_067_200_000;
const MS_PER_HOUR: f64 = 3_600_000.0;
const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.json");

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid templates: {0}")]
    Templates(String),
    #[error("gazetteer has no {0} entries")]
    EmptyGazetteer(&'static str),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Target occupancy fraction per half-hour slot: 48 values (every day
/// alike) or 336 (Monday first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandProfile(pub Vec<f64>);

impl DemandProfile {
    pub fn constant(fraction: f64) -> Self {
        Self(vec![fraction; SLOTS_PER_DAY as usize])
    }

    /// Quiet nights, a late-morning peak and a smaller afternoon peak.
    pub fn diurnal() -> Self {
        let values = (0..SLOTS_PER_DAY as usize)
            .map(|slot| {
                let h = slot as f64 / 2.0;
                let morning = 0.75 * (-((h - 11.0) / 2.5).powi(2)).exp();
                let evening = 0.55 * (-((h - 18.0) / 2.0).powi(2)).exp();
                (0.08 + morning + evening).min(0.95)
            })
            .collect();
        Self(values)
    }

    pub fn target(&self, t_ms: i64) -> f64 {
        let b = TimeBucket::of(t_ms);
        let v = if self.0.len() == SLOTS_PER_DAY as usize {
            self.0[b.slot as usize]
        } else {
            self.0[b.index()]
        };
        v.clamp(0.0, 1.0)
    }

    fn validate(&self) -> Result<(), String> {
        let n = self.0.len();
        if n != SLOTS_PER_DAY as usize && n != 7 * SLOTS_PER_DAY as usize {
            return Err(format!("demand profile needs 48 or 336 values, got {n}"));
        }
        if self.0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("demand profile values must lie in [0, 1]".into());
        }
        Ok(())
    }
}

impl Default for DemandProfile {
    fn default() -> Self {
        Self::diurnal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub start_ms: i64,
    pub duration_hours: f64,
    /// Blocks to simulate; all metered blocks with capacity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<String>>,
    pub demand_profile: DemandProfile,
    pub mean_dwell_minutes: f64,
    pub report_rate: f64,
    pub incident_rate: f64,
    pub noise_fraction: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            start_ms: DEFAULT_START_MS,
            duration_hours: 24.0,
            blocks: None,
            demand_profile: DemandProfile::default(),
            mean_dwell_minutes: 60.0,
            report_rate: 12.0,
            incident_rate: 1.0,
            noise_fraction: 0.5,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidConfig(m));
        if !(self.duration_hours >= 0.0 && self.duration_hours.is_finite()) {
            return bad("duration_hours must be a non-negative number".into());
        }
        if !(self.mean_dwell_minutes > 0.0 && self.mean_dwell_minutes.is_finite()) {
            return bad("mean_dwell_minutes must be positive".into());
        }
        for (name, v) in [("report_rate", self.report_rate), ("incident_rate", self.incident_rate)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return bad("noise_fraction must lie in [0, 1]".into());
        }
        self.demand_profile
            .validate()
            .map_err(SimulationError::InvalidConfig)
    }

    pub fn end_ms(&self) -> i64 {
        self.start_ms + (self.duration_hours * MS_PER_HOUR).round() as i64
    }

    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// parking

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedIncident {
    pub id: String,
    pub category: IncidentCategory,
    pub place: String,
    #[serde(flatten)]
    pub location: Coordinate,
    pub start: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per block, `(timestamp, occupied)` after every event, starting with
    /// the empty block at the simulation start.
    pub occupancy: BTreeMap<String, Vec<(i64, u32)>>,
    pub capacities: BTreeMap<String, u32>,
    pub incidents: Vec<InjectedIncident>,
    /// Label of every emitted report, by report id.
    pub labels: BTreeMap<String, Label>,
}

impl GroundTruth {
    /// Occupancy after all events with timestamp `<= t`.
    pub fn occupancy_at(&self, block: &str, t: i64) -> Option<u32> {
        let trace = self.occupancy.get(block)?;
        let idx = trace.partition_point(|(ts, _)| *ts <= t);
        Some(if idx == 0 { 0 } else { trace[idx - 1].1 })
    }

    pub fn free_fraction_at(&self, block: &str, t: i64) -> Option<f64> {
        let cap = *self.capacities.get(block)?;
        if cap == 0 {
            return None;
        }
        let occ = self.occupancy_at(block, t)?;
        Some((cap - occ) as f64 / cap as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParkingSimulation {
    pub events: Vec<ParkingEvent>,
    pub truth: GroundTruth,
}

/// Birth-death meter process per block: candidate arrivals at rate
/// `capacity / mean_dwell`, each accepted with the profile's target
/// fraction while the block has room; exponential dwell times.
pub fn simulate_parking(
    config: &SimulationConfig,
    graph: &CityGraph,
) -> Result<ParkingSimulation, SimulationError> {
    config.validate()?;
    let ids: Vec<String> = match &config.blocks {
        Some(ids) => {
            let mut ids = ids.clone();
            ids.sort();
            ids.dedup();
            for id in &ids {
                if graph.block(id).is_none() {
                    return Err(SimulationError::InvalidConfig(format!("unknown block {id:?}")));
                }
            }
            ids
        }
        None => graph
            .blocks()
            .iter()
            .filter(|b| b.in_metered_zone && b.capacity > 0)
            .map(|b| b.id.clone())
            .collect(),
    };

    let start = config.start_ms;
    let end = config.end_ms();
    let dwell_ms = config.mean_dwell_minutes * 60_000.0;
    let dwell = Exp::new(1.0 / dwell_ms).expect("positive dwell");

    // (timestamp, block order, local seq, block, kind)
    let mut raw: Vec<(i64, usize, usize, EventKind)> = Vec::new();
    let mut truth = GroundTruth::default();
    for (bi, id) in ids.iter().enumerate() {
        let cap = graph.block(id).map_or(0, |b| b.capacity);
        truth.capacities.insert(id.clone(), cap);
        let mut trace = vec![(start, 0u32)];
        if cap == 0 || end <= start {
            truth.occupancy.insert(id.clone(), trace);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(bi as u64 + 1);
        let arrivals = Exp::new(cap as f64 / dwell_ms).expect("positive rate");
        let mut departures: BinaryHeap<Reverse<i64>> = BinaryHeap::new();
        let mut next_arrival = start as f64 + arrivals.sample(&mut rng);
        let mut occupied = 0u32;
        let mut seq = 0usize;
        loop {
            let next_dep = departures.peek().map(|Reverse(t)| *t);
            let arrival_ms = next_arrival.round() as i64;
            match next_dep {
                Some(dep) if dep <= arrival_ms && dep < end => {
                    departures.pop();
                    occupied -= 1;
                    raw.push((dep, bi, seq, EventKind::CheckOut));
                    trace.push((dep, occupied));
                    seq += 1;
                }
                _ if arrival_ms < end => {
                    let accept = rng.random::<f64>() < config.demand_profile.target(arrival_ms);
                    if accept && occupied < cap {
                        occupied += 1;
                        let leave = arrival_ms + (dwell.sample(&mut rng).round() as i64).max(1);
                        departures.push(Reverse(leave));
                        raw.push((arrival_ms, bi, seq, EventKind::CheckIn));
                        trace.push((arrival_ms, occupied));
                        seq += 1;
                    }
                    next_arrival += arrivals.sample(&mut rng);
                }
                _ => break,
            }
        }
        truth.occupancy.insert(id.clone(), trace);
    }
    raw.sort_by_key(|&(t, b, s, _)| (t, b, s));
    let events = raw
        .into_iter()
        .enumerate()
        .map(|(i, (t, b, _, kind))| ParkingEvent {
            id: format!("pe-{i:07}"),
            block: ids[b].clone(),
            kind,
            timestamp: t,
        })
        .collect();
    Ok(ParkingSimulation { events, truth })
}

// ---------------------------------------------------------------------------
// reports

/// Phrase templates per label. `{X}` is a street; `{X}` and `{Z}` together
/// are the two streets of an intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Templates(pub BTreeMap<Label, Vec<String>>);

impl Templates {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        let t: Self =
            serde_json::from_str(text).map_err(|e| SimulationError::Templates(e.to_string()))?;
        for label in Label::ALL {
            if t.0.get(&label).is_none_or(|v| v.is_empty()) {
                return Err(SimulationError::Templates(format!("no templates for {label}")));
            }
        }
        Ok(t)
    }

    fn for_label(&self, label: Label) -> &[String] {
        &self.0[&label]
    }
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

struct Places<'a> {
    streets: Vec<(&'a str, Coordinate)>,
    crossings: Vec<(&'a str, &'a str, &'a str, Coordinate)>,
}

impl<'a> Places<'a> {
    fn new(gazetteer: &'a Gazetteer) -> Result<Self, SimulationError> {
        let streets: Vec<_> = gazetteer
            .entries_of(PlaceKind::Street)
            .into_iter()
            .map(|e| (e.key.as_str(), e.coordinate))
            .collect();
        let crossings: Vec<_> = gazetteer
            .entries_of(PlaceKind::Intersection)
            .into_iter()
            .filter_map(|e| {
                let (a, b) = e.key.split_once(" & ")?;
                Some((e.key.as_str(), a, b, e.coordinate))
            })
            .collect();
        if streets.is_empty() {
            return Err(SimulationError::EmptyGazetteer("street"));
        }
        if crossings.is_empty() {
            return Err(SimulationError::EmptyGazetteer("intersection"));
        }
        Ok(Self { streets, crossings })
    }
}

fn instantiate(template: &str, place: PlaceChoice<'_>) -> String {
    match place {
        PlaceChoice::Crossing(a, b) => template.replace("{X}", a).replace("{Z}", b),
        PlaceChoice::Street(name) => template.replace("{X}", name),
    }
}

#[derive(Clone, Copy)]
enum PlaceChoice<'a> {
    Street(&'a str),
    Crossing(&'a str, &'a str),
}

fn random_phrase(
    rng: &mut ChaCha8Rng,
    templates: &Templates,
    places: &Places<'_>,
    label: Label,
) -> String {
    let template = templates.for_label(label).choose(rng).expect("non-empty");
    let place = if template.contains("{Z}") {
        let &(_, a, b, _) = places.crossings.choose(rng).expect("non-empty");
        PlaceChoice::Crossing(a, b)
    } else {
        let &(name, _) = places.streets.choose(rng).expect("non-empty");
        PlaceChoice::Street(name)
    };
    instantiate(template, place)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSimulation {
    pub reports: Vec<TextReport>,
    pub truth: GroundTruth,
}

/// Citizen report stream. Reports arrive as a Poisson process at
/// `report_rate`; each is chatter with probability `noise_fraction` and
/// otherwise describes one of the injected incidents (a Poisson process at
/// `incident_rate`). Without injected incidents only chatter is emitted.
pub fn simulate_reports(
    config: &SimulationConfig,
    gazetteer: &Gazetteer,
    templates: &Templates,
) -> Result<ReportSimulation, SimulationError> {
    config.validate()?;
    let places = Places::new(gazetteer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0x7265_706f);
    let start = config.start_ms;
    let span = (config.end_ms() - start) as f64;
    let hours = config.duration_hours;

    let mut truth = GroundTruth::default();
    let n_incidents = poisson(&mut rng, config.incident_rate * hours);
    let mut injected: Vec<(InjectedIncident, usize)> = Vec::new();
    let mut starts: Vec<i64> = (0..n_incidents)
        .map(|_| start + (rng.random::<f64>() * span) as i64)
        .collect();
    starts.sort();
    for (i, t) in starts.into_iter().enumerate() {
        let category = *IncidentCategory::ALL.choose(&mut rng).expect("non-empty");
        let crossing = rng.random_range(0..places.crossings.len());
        let (key, _, _, at) = places.crossings[crossing];
        injected.push((
            InjectedIncident {
                id: format!("sim-inc-{i:04}"),
                category,
                place: key.to_string(),
                location: at,
                start: t,
            },
            crossing,
        ));
    }

    let n_reports = poisson(&mut rng, config.report_rate * hours);
    let mut times: Vec<i64> = (0..n_reports)
        .map(|_| start + (rng.random::<f64>() * span) as i64)
        .collect();
    times.sort();

    let mut reports = Vec::new();
    for t in times {
        let chatter = rng.random::<f64>() < config.noise_fraction;
        let (text, label) = if chatter {
            (random_phrase(&mut rng, templates, &places, Label::NonIncident), Label::NonIncident)
        } else {
            if injected.is_empty() {
                continue;
            }
            // an incident already under way, else the earliest one
            let started = injected.partition_point(|(inc, _)| inc.start <= t);
            let idx = if started == 0 { 0 } else { rng.random_range(0..started) };
            let (inc, crossing) = &injected[idx];
            let label = Label::from(inc.category);
            let template = templates.for_label(label).choose(&mut rng).expect("non-empty");
            let (_, a, b, _) = places.crossings[*crossing];
            let place = if template.contains("{Z}") {
                PlaceChoice::Crossing(a, b)
            } else {
                PlaceChoice::Street(a)
            };
            (instantiate(template, place), label)
        };
        let id = format!("rep-{:05}", reports.len());
        truth.labels.insert(id.clone(), label);
        reports.push(TextReport {
            id,
            text,
            timestamp: t,
            source: ReportSource::Social,
            category: None,
        });
    }
    truth.incidents = injected.into_iter().map(|(i, _)| i).collect();
    Ok(ReportSimulation { reports, truth })
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// `n` labeled texts cycling through every label, then shuffled.
pub fn labeled_corpus(
    config: &SimulationConfig,
    gazetteer: &Gazetteer,
    templates: &Templates,
    n: usize,
) -> Result<Vec<(String, Label)>, SimulationError> {
    let places = Places::new(gazetteer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0x636f_7270);
    let mut corpus: Vec<(String, Label)> = (0..n)
        .map(|i| {
            let label = Label::ALL[i % Label::ALL.len()];
            (random_phrase(&mut rng, templates, &places, label), label)
        })
        .collect();
    corpus.shuffle(&mut rng);
    Ok(corpus)
}

/// Newline-delimited JSON, one record per line.
pub fn to_ndjson<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn from_ndjson<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

pub fn publish_parking_events(bus: &MessageBus, events: &[ParkingEvent]) -> Result<(), BusError> {
    bus.create_topic(TOPIC_PARKING_EVENTS)?;
    for e in events {
        bus.publish_json(TOPIC_PARKING_EVENTS, e, e.timestamp)?;
    }
    Ok(())
}

pub fn publish_reports(bus: &MessageBus, reports: &[TextReport]) -> Result<(), BusError> {
    bus.create_topic(TOPIC_REPORTS)?;
    for r in reports {
        bus.publish_json(TOPIC_REPORTS, r, r.timestamp)?;
    }
    Ok(())
}

//! Scripted end-to-end runs: simulate, pump through the bus, query, and
//! summarize as a JSON report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::incident::{train_classifier, IncidentCategory, Label, TextReport};
use crate::parking::{
    predict_free_probability, AnomalyCounts, OccupancyHistory, ParkingEvent, ParkingState,
};
use crate::platform::{ApiError, Platform, PumpOutcome};
use crate::simulator::{
    labeled_corpus, publish_parking_events, publish_reports, simulate_parking, simulate_reports,
    GroundTruth, SimulationConfig,
};

const MS_PER_MINUTE: i64 = 60_000;
const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Error)]
#[error("scenario step {step:?} failed: {message}")]
pub struct ScenarioError {
    pub step: String,
    pub message: String,
}

fn fail(step: &str) -> impl Fn(String) -> ScenarioError + '_ {
    move |message| ScenarioError {
        step: step.to_string(),
        message,
    }
}

// ---------------------------------------------------------------------------
// scenario file

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Replaces the platform's simulator config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parking: Option<ParkingStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reports: Option<ReportStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<Query>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParkingStep {
    /// Days simulated before the start to build history.
    pub warmup_days: u32,
    pub snapshot_minutes: i64,
    /// Prediction horizon; predictions are made every horizon.
    pub horizon_minutes: i64,
}

impl Default for ParkingStep {
    fn default() -> Self {
        Self {
            warmup_days: 28,
            snapshot_minutes: 10,
            horizon_minutes: 30,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportStep {
    /// Reports appended to the simulated stream.
    pub extra: Vec<TextReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierStep {
    pub n: usize,
    pub train_fraction: f64,
}

impl Default for ClassifierStep {
    fn default() -> Self {
        Self {
            n: 200,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Query {
    Health,
    Blocks,
    Block { id: String },
    ActiveIncidents { t: i64 },
    Ranking { x: f64, y: f64, radius: f64, t: i64 },
    Routes {
        from: String,
        to: String,
        t: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
    },
}

impl Query {
    /// HTTP path and query string for the equivalent gateway request.
    pub fn http_path(&self) -> String {
        match self {
            Query::Health => "/health".into(),
            Query::Blocks => "/blocks".into(),
            Query::Block { id } => format!("/blocks/{id}"),
            Query::ActiveIncidents { t } => format!("/incidents/active?t={t}"),
            Query::Ranking { x, y, radius, t } => {
                format!("/parking/ranking?x={x}&y={y}&radius={radius}&t={t}")
            }
            Query::Routes { from, to, t, k } => {
                let mut s = format!("/routes?from={from}&to={to}&t={t}");
                if let Some(k) = k {
                    s.push_str(&format!("&k={k}"));
                }
                s
            }
        }
    }

    /// Runs the query in process; the result is what the gateway serves.
    pub fn execute(&self, platform: &Platform) -> QueryAnswer {
        fn ok<T: Serialize>(v: T) -> QueryAnswer {
            QueryAnswer {
                status: 200,
                body: serde_json::to_value(v).expect("serializable result"),
            }
        }
        fn answer<T: Serialize>(r: Result<T, ApiError>) -> QueryAnswer {
            match r {
                Ok(v) => ok(v),
                Err(e) => QueryAnswer {
                    status: e.http_status,
                    body: serde_json::to_value(e).expect("serializable error"),
                },
            }
        }
        match self {
            Query::Health => ok(platform.health()),
            Query::Blocks => ok(platform.blocks()),
            Query::Block { id } => answer(platform.block(id)),
            Query::ActiveIncidents { t } => ok(platform.active_incidents(*t)),
            Query::Ranking { x, y, radius, t } => answer(platform.ranking(*x, *y, *radius, *t)),
            Query::Routes { from, to, t, k } => answer(platform.routes(
                from,
                to,
                *t,
                k.unwrap_or(crate::route::DEFAULT_K),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    pub status: u16,
    pub body: Value,
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parking: Option<ParkingMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reports: Option<ReportMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<QueryRecord>,
}

impl ScenarioReport {
    /// Canonical on-disk form: pretty JSON with a trailing newline.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingMetrics {
    pub blocks: usize,
    pub warmup_events: usize,
    pub events: usize,
    pub events_applied: u64,
    pub anomalies: AnomalyCounts,
    /// Block-tick pairs where the live state disagreed with ground truth.
    pub replay_mismatches: u64,
    pub history_buckets: usize,
    pub prediction: PredictionMetrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub alpha: f64,
    pub horizon_minutes: i64,
    pub samples: u64,
    pub model_mae: f64,
    pub constant_mae: f64,
    pub live_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub reports: usize,
    pub injected_incidents: usize,
    pub processed: u64,
    pub rejected: u64,
    pub detected: u64,
    pub dropped_non_incident: u64,
    pub dropped_low_confidence: u64,
    pub dropped_unlocated: u64,
    /// Detections whose category equals the report's true label.
    pub correct_category: u64,
    pub detected_by_category: BTreeMap<IncidentCategory, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub train: usize,
    pub test: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: Query,
    pub path: String,
    #[serde(flatten)]
    pub answer: QueryAnswer,
}

// ---------------------------------------------------------------------------
// prediction evaluation

/// Accumulates absolute errors of the blended predictor and two baselines
/// (constant 0.5 and live state only) against ground truth.
#[derive(Debug, Clone, Default)]
pub struct PredictionEvaluator {
    alpha: f64,
    samples: u64,
    model: f64,
    constant: f64,
    live: f64,
}

impl PredictionEvaluator {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    /// Predicts every simulated block for `target` from the state at the
    /// time of the call and scores it against `truth`.
    pub fn observe(
        &mut self,
        history: &OccupancyHistory,
        state: &ParkingState,
        truth: &GroundTruth,
        target: i64,
    ) {
        for block in truth.capacities.keys() {
            let Some(actual) = truth.free_fraction_at(block, target) else {
                continue;
            };
            let Ok(p) = predict_free_probability(history, state, block, target, self.alpha) else {
                continue;
            };
            let Ok(live) = predict_free_probability(history, state, block, target, 1.0) else {
                continue;
            };
            self.samples += 1;
            self.model += (p - actual).abs();
            self.constant += (0.5 - actual).abs();
            self.live += (live - actual).abs();
        }
    }

    pub fn finish(&self, horizon_minutes: i64) -> PredictionMetrics {
        let n = self.samples.max(1) as f64;
        PredictionMetrics {
            alpha: self.alpha,
            horizon_minutes,
            samples: self.samples,
            model_mae: self.model / n,
            constant_mae: self.constant / n,
            live_mae: self.live / n,
        }
    }
}

/// Warm-up stream: `days` days ending at `config.start_ms`, on a seed
/// distinct from the evaluated stream.
pub fn warmup_config(config: &SimulationConfig, days: u32) -> SimulationConfig {
    SimulationConfig {
        seed: config.seed.wrapping_add(1),
        start_ms: config.start_ms - days as i64 * MS_PER_DAY,
        duration_hours: days as f64 * 24.0,
        ..config.clone()
    }
}

/// Replays `events` into `state`, calling `snapshot` every `snapshot_ms`
/// from `start` up to (excluding) `end` after applying all events up to
/// that instant.
pub fn replay_snapshots(
    state: &mut ParkingState,
    events: &[ParkingEvent],
    start: i64,
    end: i64,
    snapshot_ms: i64,
    mut snapshot: impl FnMut(&ParkingState, i64),
) {
    let mut i = 0;
    let mut t = start;
    while t < end {
        while i < events.len() && events[i].timestamp <= t {
            let _ = state.apply_event(&events[i]);
            i += 1;
        }
        snapshot(state, t);
        t += snapshot_ms;
    }
}

// ---------------------------------------------------------------------------
// runner

fn validate(scenario: &Scenario) -> Result<(), ScenarioError> {
    if let Some(p) = &scenario.parking {
        if p.snapshot_minutes <= 0 || p.horizon_minutes <= 0 {
            return Err(fail("parking")("snapshot and horizon must be positive".into()));
        }
        if p.horizon_minutes % p.snapshot_minutes != 0 {
            return Err(fail("parking")(
                "horizon_minutes must be a multiple of snapshot_minutes".into(),
            ));
        }
    }
    if let Some(c) = &scenario.classifier {
        if !(c.train_fraction > 0.0 && c.train_fraction < 1.0) || c.n < 2 {
            return Err(fail("classifier")(
                "need n >= 2 and train_fraction in (0, 1)".into(),
            ));
        }
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| fail("parse")(e.to_string()))?;
    validate(&s)?;
    Ok(s)
}

/// Runs every step of `scenario` against `platform`.
pub fn run_scenario(platform: &Platform, scenario: &Scenario) -> Result<ScenarioReport, ScenarioError> {
    validate(scenario)?;
    let sim = scenario
        .simulation
        .clone()
        .unwrap_or_else(|| platform.simulation().clone());
    let mut report = ScenarioReport::default();
    if let Some(step) = &scenario.parking {
        report.parking = Some(run_parking(platform, &sim, step)?);
    }
    if let Some(step) = &scenario.reports {
        report.reports = Some(run_reports(platform, &sim, step)?);
    }
    if let Some(step) = &scenario.classifier {
        report.classifier = Some(run_classifier(platform, &sim, step)?);
    }
    report.queries = scenario
        .queries
        .iter()
        .map(|q| QueryRecord {
            query: q.clone(),
            path: q.http_path(),
            answer: q.execute(platform),
        })
        .collect();
    Ok(report)
}

fn run_parking(
    platform: &Platform,
    sim: &SimulationConfig,
    step: &ParkingStep,
) -> Result<ParkingMetrics, ScenarioError> {
    let err = fail("parking");
    let graph = platform.graph();
    let snapshot_ms = step.snapshot_minutes * MS_PER_MINUTE;
    let horizon_ms = step.horizon_minutes * MS_PER_MINUTE;

    let mut warmup_events = 0;
    if step.warmup_days > 0 {
        let wcfg = warmup_config(sim, step.warmup_days);
        let warm = simulate_parking(&wcfg, graph).map_err(|e| err(e.to_string()))?;
        warmup_events = warm.events.len();
        let mut state = ParkingState::for_graph(graph);
        replay_snapshots(
            &mut state,
            &warm.events,
            wcfg.start_ms,
            wcfg.end_ms(),
            snapshot_ms,
            |s, t| platform.record_external_snapshot(s, t),
        );
    }

    let live = simulate_parking(sim, graph).map_err(|e| err(e.to_string()))?;
    let (start, end) = (sim.start_ms, sim.end_ms());
    let mut evaluator = PredictionEvaluator::new(platform.thresholds().alpha);
    let mut mismatches = 0u64;
    let mut published = 0usize;
    let mut t = start;
    while t <= end {
        let upto = live.events[published..].partition_point(|e| e.timestamp <= t) + published;
        publish_parking_events(platform.bus(), &live.events[published..upto])
            .map_err(|e| err(e.to_string()))?;
        published = upto;
        for outcome in platform.pump() {
            if let PumpOutcome::Parking { result: Err(e), .. } = outcome {
                return Err(err(e.to_string()));
            }
        }
        platform.with_parking(|state, history| {
            for (block, _) in &live.truth.capacities {
                let have = state.get(block).map(|o| o.occupied);
                if have != live.truth.occupancy_at(block, t) {
                    mismatches += 1;
                }
            }
            if (t - start) % horizon_ms == 0 && t + horizon_ms <= end {
                evaluator.observe(history, state, &live.truth, t + horizon_ms);
            }
        });
        if t < end {
            platform.record_snapshot(t);
        }
        t += snapshot_ms;
    }
    if published != live.events.len() {
        publish_parking_events(platform.bus(), &live.events[published..])
            .map_err(|e| err(e.to_string()))?;
        platform.pump();
    }

    let (events_applied, anomalies, history_buckets) =
        platform.with_parking(|s, h| (s.events_applied(), s.anomalies(), h.len()));
    Ok(ParkingMetrics {
        blocks: live.truth.capacities.len(),
        warmup_events,
        events: live.events.len(),
        events_applied,
        anomalies,
        replay_mismatches: mismatches,
        history_buckets,
        prediction: evaluator.finish(step.horizon_minutes),
    })
}

fn run_reports(
    platform: &Platform,
    sim: &SimulationConfig,
    step: &ReportStep,
) -> Result<ReportMetrics, ScenarioError> {
    let err = fail("reports");
    let simulated = simulate_reports(sim, platform.graph().gazetteer(), platform.templates())
        .map_err(|e| err(e.to_string()))?;
    let mut reports = simulated.reports.clone();
    reports.extend(step.extra.iter().cloned());
    reports.sort_by_key(|r| r.timestamp);
    publish_reports(platform.bus(), &reports).map_err(|e| err(e.to_string()))?;

    let truth: BTreeMap<&str, Label> = simulated
        .truth
        .labels
        .iter()
        .map(|(k, v)| (k.as_str(), *v))
        .chain(step.extra.iter().filter_map(|r| {
            r.category.map(|c| (r.id.as_str(), Label::from(c)))
        }))
        .collect();

    let before = platform.detector().metrics();
    let mut processed = 0;
    let mut rejected = 0;
    let mut correct_category = 0;
    let mut detected_by_category = BTreeMap::new();
    for outcome in platform.pump() {
        match outcome {
            PumpOutcome::Report { result: Ok(inc), .. } => {
                processed += 1;
                if let Some(inc) = inc {
                    *detected_by_category.entry(inc.category).or_insert(0u64) += 1;
                    if truth.get(inc.source_report.as_str()) == Some(&Label::from(inc.category)) {
                        correct_category += 1;
                    }
                }
            }
            PumpOutcome::Report { result: Err(_), .. } => rejected += 1,
            PumpOutcome::Malformed { error, .. } => return Err(err(error)),
            PumpOutcome::Parking { .. } => {}
        }
    }
    let after = platform.detector().metrics();
    Ok(ReportMetrics {
        reports: reports.len(),
        injected_incidents: simulated.truth.incidents.len(),
        processed,
        rejected,
        detected: after.detected - before.detected,
        dropped_non_incident: after.dropped_non_incident - before.dropped_non_incident,
        dropped_low_confidence: after.dropped_low_confidence - before.dropped_low_confidence,
        dropped_unlocated: after.dropped_unlocated - before.dropped_unlocated,
        correct_category,
        detected_by_category,
    })
}

/// Train/test split of the template corpus and held-out accuracy.
pub fn evaluate_classifier(
    corpus: &[(String, Label)],
    train_fraction: f64,
    smoothing_alpha: f64,
) -> Result<ClassifierMetrics, String> {
    let n_train = ((corpus.len() as f64) * train_fraction).round() as usize;
    let (train, test) = corpus.split_at(n_train.min(corpus.len()));
    let model = train_classifier(train, smoothing_alpha).map_err(|e| e.to_string())?;
    let correct = test
        .iter()
        .filter(|(text, label)| model.classify(text).label == *label)
        .count();
    Ok(ClassifierMetrics {
        train: train.len(),
        test: test.len(),
        correct,
        accuracy: if test.is_empty() {
            0.0
        } else {
            correct as f64 / test.len() as f64
        },
    })
}

fn run_classifier(
    platform: &Platform,
    sim: &SimulationConfig,
    step: &ClassifierStep,
) -> Result<ClassifierMetrics, ScenarioError> {
    let err = fail("classifier");
    let corpus = labeled_corpus(sim, platform.graph().gazetteer(), platform.templates(), step.n)
        .map_err(|e| err(e.to_string()))?;
    evaluate_classifier(&corpus, step.train_fraction, platform.thresholds().smoothing_alpha)
        .map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scenario_parses_and_serializes_empty() {
        let s = parse_scenario("{}").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(serde_json::to_string(&ScenarioReport::default()).unwrap(), "{}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(parse_scenario(r#"{"parkin": {}}"#).is_err());
        let e = parse_scenario(r#"{"parking": {"snapshot_minutes": 7}}"#).unwrap_err();
        assert_eq!(e.step, "parking");
    }

    #[test]
    fn query_paths() {
        let q: Query =
            serde_json::from_str(r#"{"kind": "routes", "from": "a", "to": "b", "t": 5}"#).unwrap();
        assert_eq!(q.http_path(), "/routes?from=a&to=b&t=5");
        let q = Query::Ranking {
            x: 1.5,
            y: -2.0,
            radius: 300.0,
            t: 9,
        };
        assert_eq!(q.http_path(), "/parking/ranking?x=1.5&y=-2&radius=300&t=9");
    }

    #[test]
    fn warmup_ends_at_start() {
        let cfg = SimulationConfig::default();
        let w = warmup_config(&cfg, 2);
        assert_eq!(w.end_ms(), cfg.start_ms);
        assert_ne!(w.seed, cfg.seed);
    }
}

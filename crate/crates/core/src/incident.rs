//! Incident detection from citizen text reports: tokenization, a multinomial
//! naive-Bayes classifier, gazetteer-based geolocation and the store of
//! incidents with their validity windows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::bus::{BusError, MessageBus};
use crate::city::{Coordinate, Gazetteer, GazetteerEntry, PlaceKind};

pub const TOPIC_REPORTS: &str = "reports.raw";
pub const TOPIC_INCIDENTS: &str = "incidents.detected";
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.6;
pub const DEFAULT_SMOOTHING_ALPHA: f64 = 1.0;
const MS_PER_MINUTE: i64 = 60_000;
const MAX_PLACE_WORDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentCategory {
    Accident,
    RoadClosure,
    Construction,
    Congestion,
    Hazard,
}

impl IncidentCategory {
    pub const ALL: [IncidentCategory; 5] = [
        IncidentCategory::Accident,
        IncidentCategory::RoadClosure,
        IncidentCategory::Construction,
        IncidentCategory::Congestion,
        IncidentCategory::Hazard,
    ];
}

/// Classifier output space: every incident category plus `non_incident`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Accident,
    RoadClosure,
    Construction,
    Congestion,
    Hazard,
    NonIncident,
}

impl Label {
    pub const ALL: [Label; 6] = [
        Label::Accident,
        Label::RoadClosure,
        Label::Construction,
        Label::Congestion,
        Label::Hazard,
        Label::NonIncident,
    ];

    pub fn category(self) -> Option<IncidentCategory> {
        match self {
            Label::Accident => Some(IncidentCategory::Accident),
            Label::RoadClosure => Some(IncidentCategory::RoadClosure),
            Label::Construction => Some(IncidentCategory::Construction),
            Label::Congestion => Some(IncidentCategory::Congestion),
            Label::Hazard => Some(IncidentCategory::Hazard),
            Label::NonIncident => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Accident => "accident",
            Label::RoadClosure => "road_closure",
            Label::Construction => "construction",
            Label::Congestion => "congestion",
            Label::Hazard => "hazard",
            Label::NonIncident => "non_incident",
        }
    }
}

impl From<IncidentCategory> for Label {
    fn from(c: IncidentCategory) -> Self {
        match c {
            IncidentCategory::Accident => Label::Accident,
            IncidentCategory::RoadClosure => Label::RoadClosure,
            IncidentCategory::Construction => Label::Construction,
            IncidentCategory::Congestion => Label::Congestion,
            IncidentCategory::Hazard => Label::Hazard,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

/// Validity window per category, in minutes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationTable(pub BTreeMap<IncidentCategory, u32>);

impl Default for DurationTable {
    fn default() -> Self {
        use IncidentCategory::*;
        DurationTable(BTreeMap::from([
            (Accident, 45),
            (RoadClosure, 180),
            (Construction, 480),
            (Congestion, 30),
            (Hazard, 60),
        ]))
    }
}

impl DurationTable {
    pub fn minutes(&self, category: IncidentCategory) -> u32 {
        self.0
            .get(&category)
            .copied()
            .unwrap_or_else(|| DurationTable::default().0[&category])
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.0.iter().find(|(_, &m)| m == 0) {
            Some((c, _)) => Err(format!("duration for {c:?} must be positive")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportSource {
    Social,
    Municipal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextReport {
    pub id: String,
    pub text: String,
    pub timestamp: i64,
    pub source: ReportSource,
    /// Explicit category for trusted municipal notices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<IncidentCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: String,
    pub category: IncidentCategory,
    #[serde(flatten)]
    pub location: Coordinate,
    pub start: i64,
    pub duration_min: u32,
    pub confidence: f64,
    pub source_report: String,
}

impl Incident {
    pub fn end(&self) -> i64 {
        self.start + self.duration_min as i64 * MS_PER_MINUTE
    }

    /// Half-open validity window `[start, start + duration)`.
    pub fn is_active(&self, t: i64) -> bool {
        self.start <= t && t < self.end()
    }
}

// ---------------------------------------------------------------------------
// text processing

fn fold(text: &str) -> String {
    text.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Lowercase, accent-folded unigrams of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    fold(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

/// Words used for place matching: like [`tokenize`] but keeps short tokens
/// ("9 de julio") and `&` connectors.
fn place_words(text: &str) -> Vec<String> {
    fold(text)
        .replace('&', " & ")
        .split(|c: char| !(c.is_alphanumeric() || c == '&'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceMatch {
    pub entry: GazetteerEntry,
    /// Word offset and length of the match in the text.
    pub start: usize,
    pub words: usize,
}

/// Finds the best gazetteer reference in `text`. Intersections ("X y Z",
/// "X & Z") take precedence over single places; the longest match wins and
/// then the earliest.
pub fn find_place(text: &str, gazetteer: &Gazetteer) -> Option<PlaceMatch> {
    let words = place_words(text);
    let n = words.len();
    let max_n = MAX_PLACE_WORDS;
    let better = |best: &Option<PlaceMatch>, start: usize, len: usize| match best {
        None => true,
        Some(b) => len > b.words || (len == b.words && start < b.start),
    };

    let mut best: Option<PlaceMatch> = None;
    for i in 0..n {
        for a in 1..=max_n.min(n - i) {
            let conn = i + a;
            if conn >= n || !(words[conn] == "y" || words[conn] == "&") {
                continue;
            }
            let left = words[i..conn].join(" ");
            for b in 1..=max_n.min(n - conn - 1) {
                let right = words[conn + 1..conn + 1 + b].join(" ");
                let len = a + 1 + b;
                if !better(&best, i, len) {
                    continue;
                }
                if let Some(e) = gazetteer
                    .lookup(&format!("{left} & {right}"))
                    .filter(|e| e.kind == PlaceKind::Intersection)
                {
                    best = Some(PlaceMatch {
                        entry: e.clone(),
                        start: i,
                        words: len,
                    });
                }
            }
        }
    }
    if best.is_some() {
        return best;
    }
    for i in 0..n {
        for len in 1..=max_n.min(n - i) {
            if !better(&best, i, len) {
                continue;
            }
            let key = words[i..i + len].join(" ");
            if let Some(e) = gazetteer
                .lookup(&key)
                .filter(|e| e.kind != PlaceKind::Intersection)
            {
                best = Some(PlaceMatch {
                    entry: e.clone(),
                    start: i,
                    words: len,
                });
            }
        }
    }
    best
}

pub fn extract_location(text: &str, gazetteer: &Gazetteer) -> Option<Coordinate> {
    find_place(text, gazetteer).map(|m| m.entry.coordinate)
}

// ---------------------------------------------------------------------------
// classifier

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("class {0} has no training examples")]
    MissingClass(Label),
    #[error("smoothing alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
}

/// Multinomial naive Bayes with additive smoothing. Parameters are stored
/// as natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub labels: Vec<Label>,
    pub vocabulary: BTreeMap<String, usize>,
    pub class_priors: Vec<f64>,
    /// `token_likelihoods[class][token]`.
    pub token_likelihoods: Vec<Vec<f64>>,
    pub smoothing_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub confidence: f64,
    /// Normalized posterior per model label, in model label order.
    pub posteriors: Vec<(Label, f64)>,
}

/// Trains over the labels present in `corpus`.
pub fn train_classifier(
    corpus: &[(String, Label)],
    smoothing_alpha: f64,
) -> Result<ClassifierModel, ClassifierError> {
    let labels: BTreeSet<Label> = corpus.iter().map(|(_, l)| *l).collect();
    train_classifier_for(corpus, &labels.into_iter().collect::<Vec<_>>(), smoothing_alpha)
}

/// Trains over an explicit label set; every label needs an example.
pub fn train_classifier_for(
    corpus: &[(String, Label)],
    labels: &[Label],
    smoothing_alpha: f64,
) -> Result<ClassifierModel, ClassifierError> {
    if !(smoothing_alpha > 0.0 && smoothing_alpha.is_finite()) {
        return Err(ClassifierError::InvalidAlpha(smoothing_alpha));
    }
    if corpus.is_empty() {
        return Err(ClassifierError::EmptyCorpus);
    }
    let labels: Vec<Label> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let tokenized: Vec<(Vec<String>, Label)> = corpus
        .iter()
        .map(|(t, l)| (tokenize(t), *l))
        .collect();
    let vocabulary: BTreeMap<String, usize> = tokenized
        .iter()
        .flat_map(|(toks, _)| toks.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, i))
        .collect();

    let v = vocabulary.len();
    let mut doc_counts = vec![0usize; labels.len()];
    let mut token_counts = vec![vec![0u64; v]; labels.len()];
    for (toks, label) in &tokenized {
        let Ok(c) = labels.binary_search(label) else {
            continue;
        };
        doc_counts[c] += 1;
        for t in toks {
            token_counts[c][vocabulary[t]] += 1;
        }
    }
    if let Some(c) = doc_counts.iter().position(|&n| n == 0) {
        return Err(ClassifierError::MissingClass(labels[c]));
    }
    let total_docs: usize = doc_counts.iter().sum();
    let class_priors = doc_counts
        .iter()
        .map(|&n| (n as f64 / total_docs as f64).ln())
        .collect();
    let token_likelihoods = token_counts
        .iter()
        .map(|counts| {
            let total: u64 = counts.iter().sum();
            let denom = total as f64 + smoothing_alpha * v as f64;
            counts
                .iter()
                .map(|&k| ((k as f64 + smoothing_alpha) / denom).ln())
                .collect()
        })
        .collect();
    Ok(ClassifierModel {
        labels,
        vocabulary,
        class_priors,
        token_likelihoods,
        smoothing_alpha,
    })
}

impl ClassifierModel {
    /// Unnormalized log posteriors for the in-vocabulary tokens of `text`,
    /// along with the number of tokens that contributed.
    pub fn log_scores(&self, text: &str) -> (Vec<f64>, usize) {
        let ids: Vec<usize> = tokenize(text)
            .iter()
            .filter_map(|t| self.vocabulary.get(t).copied())
            .collect();
        let scores = self
            .labels
            .iter()
            .enumerate()
            .map(|(c, _)| {
                self.class_priors[c]
                    + ids
                        .iter()
                        .map(|&i| self.token_likelihoods[c][i])
                        .sum::<f64>()
            })
            .collect();
        (scores, ids.len())
    }

    /// Maximum a-posteriori label. Text with no known tokens carries no
    /// evidence and is labeled `non_incident`.
    pub fn classify(&self, text: &str) -> Classification {
        let (scores, known) = self.log_scores(text);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let posteriors: Vec<(Label, f64)> = self
            .labels
            .iter()
            .zip(&scores)
            .map(|(&l, &s)| (l, (s - norm).exp()))
            .collect();
        let (label, confidence) = if known == 0 {
            let p = posteriors
                .iter()
                .find(|(l, _)| *l == Label::NonIncident)
                .map_or(0.0, |(_, p)| *p);
            (Label::NonIncident, p)
        } else {
            // first label wins ties
            posteriors
                .iter()
                .copied()
                .fold(None::<(Label, f64)>, |best, (l, p)| match best {
                    Some((_, bp)) if bp >= p => best,
                    _ => Some((l, p)),
                })
                .expect("model has at least one label")
        };
        Classification {
            label,
            confidence: confidence.clamp(0.0, 1.0),
            posteriors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// ---------------------------------------------------------------------------
// store and pipeline

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IncidentError {
    #[error("report {0:?} has empty text")]
    EmptyText(String),
    #[error("incident {0:?} already stored")]
    Duplicate(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Active-incident repository. Readers see each incident atomically.
#[derive(Debug, Default)]
pub struct IncidentStore {
    incidents: RwLock<BTreeMap<String, Incident>>,
}

impl IncidentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, incident: Incident) -> Result<(), IncidentError> {
        let mut map = self.incidents.write().unwrap();
        if map.contains_key(&incident.id) {
            return Err(IncidentError::Duplicate(incident.id));
        }
        map.insert(incident.id.clone(), incident);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Incident> {
        self.incidents.read().unwrap().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.incidents.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Vec<Incident> {
        let mut v: Vec<Incident> = self.incidents.read().unwrap().values().cloned().collect();
        sort_incidents(&mut v);
        v
    }

    /// Incidents valid at `t`, ordered by start then id.
    pub fn active_incidents(&self, t: i64) -> Vec<Incident> {
        active_incidents(self.incidents.read().unwrap().values(), t)
    }
}

fn sort_incidents(v: &mut [Incident]) {
    v.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
}

pub fn active_incidents<'a>(all: impl IntoIterator<Item = &'a Incident>, t: i64) -> Vec<Incident> {
    let mut v: Vec<Incident> = all.into_iter().filter(|i| i.is_active(t)).cloned().collect();
    sort_incidents(&mut v);
    v
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub ingested: u64,
    pub detected: u64,
    pub dropped_non_incident: u64,
    pub dropped_low_confidence: u64,
    pub dropped_unlocated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub confidence_threshold: f64,
    pub durations: DurationTable,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            durations: DurationTable::default(),
        }
    }
}

/// Turns reports into incidents: classify, geolocate, assign a duration,
/// store, and announce on the bus.
#[derive(Debug)]
pub struct IncidentDetector {
    model: ClassifierModel,
    config: DetectorConfig,
    ingested: AtomicU64,
    detected: AtomicU64,
    dropped_non_incident: AtomicU64,
    dropped_low_confidence: AtomicU64,
    dropped_unlocated: AtomicU64,
}

impl IncidentDetector {
    pub fn new(model: ClassifierModel, config: DetectorConfig) -> Self {
        Self {
            model,
            config,
            ingested: AtomicU64::new(0),
            detected: AtomicU64::new(0),
            dropped_non_incident: AtomicU64::new(0),
            dropped_low_confidence: AtomicU64::new(0),
            dropped_unlocated: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn metrics(&self) -> DetectorMetrics {
        DetectorMetrics {
            ingested: self.ingested.load(Ordering::Relaxed),
            detected: self.detected.load(Ordering::Relaxed),
            dropped_non_incident: self.dropped_non_incident.load(Ordering::Relaxed),
            dropped_low_confidence: self.dropped_low_confidence.load(Ordering::Relaxed),
            dropped_unlocated: self.dropped_unlocated.load(Ordering::Relaxed),
        }
    }

    /// Returns the stored incident, or `None` when the report is chatter,
    /// too uncertain, or cannot be placed on the map.
    pub fn ingest_report(
        &self,
        report: &TextReport,
        gazetteer: &Gazetteer,
        store: &IncidentStore,
        bus: Option<&MessageBus>,
    ) -> Result<Option<Incident>, IncidentError> {
        if report.text.trim().is_empty() {
            return Err(IncidentError::EmptyText(report.id.clone()));
        }
        self.ingested.fetch_add(1, Ordering::Relaxed);

        let (category, confidence) = match (report.source, report.category) {
            (ReportSource::Municipal, Some(c)) => (c, 1.0),
            _ => {
                let result = self.model.classify(&report.text);
                let Some(c) = result.label.category() else {
                    self.dropped_non_incident.fetch_add(1, Ordering::Relaxed);
                    return Ok(None);
                };
                if result.confidence < self.config.confidence_threshold {
                    self.dropped_low_confidence.fetch_add(1, Ordering::Relaxed);
                    return Ok(None);
                }
                (c, result.confidence)
            }
        };
        let Some(location) = extract_location(&report.text, gazetteer) else {
            self.dropped_unlocated.fetch_add(1, Ordering::Relaxed);
            return Ok(None);
        };
        let incident = Incident {
            id: format!("inc-{}", report.id),
            category,
            location,
            start: report.timestamp,
            duration_min: self.config.durations.minutes(category),
            confidence,
            source_report: report.id.clone(),
        };
        store.insert(incident.clone())?;
        self.detected.fetch_add(1, Ordering::Relaxed);
        if let Some(bus) = bus {
            bus.create_topic(TOPIC_INCIDENTS)?;
            bus.publish_json(TOPIC_INCIDENTS, &incident, incident.start)?;
        }
        Ok(Some(incident))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gazetteer() -> Gazetteer {
        let mut g = Gazetteer::new();
        g.register(
            "San Martín & 9 de Julio",
            Coordinate::new(120.0, 340.0),
            PlaceKind::Intersection,
        )
        .unwrap();
        g.register("San Martín", Coordinate::new(100.0, 300.0), PlaceKind::Street)
            .unwrap();
        g.register("9 de Julio", Coordinate::new(150.0, 340.0), PlaceKind::Street)
            .unwrap();
        g.register("Pinto", Coordinate::new(0.0, 50.0), PlaceKind::Street)
            .unwrap();
        g
    }

    fn toy_model() -> ClassifierModel {
        let corpus = vec![
            ("choque".to_string(), Label::Accident),
            ("feria".to_string(), Label::NonIncident),
        ];
        train_classifier(&corpus, 1.0).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Choque en San Martín!"),
            vec!["choque", "en", "san", "martin"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize("A   B").is_empty());
        assert_eq!(tokenize("corte—calle,ÁVILA"), vec!["corte", "calle", "avila"]);
    }

    #[test]
    fn separable_corpus() {
        let m = toy_model();
        assert_eq!(m.classify("choque").label, Label::Accident);
        assert_eq!(m.classify("feria").label, Label::NonIncident);
        let empty = m.classify("");
        assert_eq!(empty.label, Label::NonIncident);
        assert!((empty.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn training_errors() {
        assert_eq!(train_classifier(&[], 1.0), Err(ClassifierError::EmptyCorpus));
        let corpus = vec![("choque".to_string(), Label::Accident)];
        assert_eq!(
            train_classifier_for(&corpus, &[Label::Accident, Label::Hazard], 1.0),
            Err(ClassifierError::MissingClass(Label::Hazard))
        );
        assert!(matches!(
            train_classifier(&corpus, 0.0),
            Err(ClassifierError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn likelihoods_normalized() {
        let corpus = vec![
            ("choque fuerte en pinto".to_string(), Label::Accident),
            ("choque en la ruta".to_string(), Label::Accident),
            ("lindo dia".to_string(), Label::NonIncident),
        ];
        let m = train_classifier(&corpus, 0.5).unwrap();
        for row in &m.token_likelihoods {
            let s: f64 = row.iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|l| l.is_finite()));
        }
        let p: f64 = m.class_priors.iter().map(|l| l.exp()).sum();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_json_round_trip() {
        let m = toy_model();
        assert_eq!(ClassifierModel::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn location_precedence() {
        let g = gazetteer();
        assert_eq!(
            extract_location("corte en san martin y 9 de julio", &g),
            Some(Coordinate::new(120.0, 340.0))
        );
        assert_eq!(extract_location("todo tranquilo hoy", &g), None);
        assert_eq!(
            extract_location("Pinto cortada, desvio por 9 de Julio & San Martín", &g),
            Some(Coordinate::new(120.0, 340.0))
        );
        // single streets: longest match wins
        assert_eq!(
            extract_location("bache en pinto, cerca de 9 de julio", &g),
            Some(Coordinate::new(150.0, 340.0))
        );
        assert_eq!(
            extract_location("obras en pinto", &g),
            Some(Coordinate::new(0.0, 50.0))
        );
    }

    #[test]
    fn half_open_validity() {
        let i = Incident {
            id: "i".into(),
            category: IncidentCategory::Accident,
            location: Coordinate::new(0.0, 0.0),
            start: 0,
            duration_min: 30,
            confidence: 1.0,
            source_report: "r".into(),
        };
        assert!(i.is_active(0));
        assert!(i.is_active(29 * 60_000));
        assert!(i.is_active(30 * 60_000 - 1));
        assert!(!i.is_active(30 * 60_000));
        assert!(!i.is_active(-1));
    }

    #[test]
    fn incident_json_shape() {
        let i = Incident {
            id: "inc-r1".into(),
            category: IncidentCategory::RoadClosure,
            location: Coordinate::new(1.5, 2.5),
            start: 10,
            duration_min: 180,
            confidence: 0.75,
            source_report: "r1".into(),
        };
        let v: serde_json::Value = serde_json::to_value(&i).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"id":"inc-r1","category":"road_closure","x":1.5,"y":2.5,
                "start":10,"duration_min":180,"confidence":0.75,"source_report":"r1"})
        );
    }

    fn report(id: &str, text: &str) -> TextReport {
        TextReport {
            id: id.into(),
            text: text.into(),
            timestamp: 1_000,
            source: ReportSource::Social,
            category: None,
        }
    }

    #[test]
    fn ingest_paths() {
        let g = gazetteer();
        let store = IncidentStore::new();
        let bus = MessageBus::new();
        let det = IncidentDetector::new(toy_model(), DetectorConfig::default());

        let inc = det
            .ingest_report(&report("r1", "choque san martin y 9 de julio"), &g, &store, Some(&bus))
            .unwrap()
            .unwrap();
        assert_eq!(inc.category, IncidentCategory::Accident);
        assert_eq!(inc.location, Coordinate::new(120.0, 340.0));
        assert_eq!(inc.duration_min, 45);
        assert_eq!(bus.topic(TOPIC_INCIDENTS).unwrap().next_seq, 1);

        assert!(det
            .ingest_report(&report("r2", "feria en pinto"), &g, &store, None)
            .unwrap()
            .is_none());
        assert!(det
            .ingest_report(&report("r3", "choque en la ruta"), &g, &store, None)
            .unwrap()
            .is_none());
        assert!(matches!(
            det.ingest_report(&report("r1", "choque en pinto"), &g, &store, None),
            Err(IncidentError::Duplicate(_))
        ));
        assert!(matches!(
            det.ingest_report(&report("r9", "  "), &g, &store, None),
            Err(IncidentError::EmptyText(_))
        ));

        let m = det.metrics();
        assert_eq!(m.detected, 1);
        assert_eq!(m.dropped_non_incident, 1);
        assert_eq!(m.dropped_unlocated, 1);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn municipal_reports_bypass_classifier() {
        let g = gazetteer();
        let store = IncidentStore::new();
        let det = IncidentDetector::new(toy_model(), DetectorConfig::default());
        let mut r = report("m1", "aviso municipal: pinto");
        r.source = ReportSource::Municipal;
        r.category = Some(IncidentCategory::Construction);
        let inc = det.ingest_report(&r, &g, &store, None).unwrap().unwrap();
        assert_eq!(inc.category, IncidentCategory::Construction);
        assert_eq!(inc.confidence, 1.0);
        assert_eq!(inc.duration_min, 480);
    }

    #[test]
    fn low_confidence_is_dropped() {
        let g = gazetteer();
        let store = IncidentStore::new();
        let cfg = DetectorConfig {
            confidence_threshold: 0.99,
            ..DetectorConfig::default()
        };
        let det = IncidentDetector::new(toy_model(), cfg);
        assert!(det
            .ingest_report(&report("r1", "choque en pinto"), &g, &store, None)
            .unwrap()
            .is_none());
        assert_eq!(det.metrics().dropped_low_confidence, 1);
    }
}

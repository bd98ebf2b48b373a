//! Python bindings. Structured values cross the boundary as the same JSON
//! documents the HTTP gateway returns, decoded into plain dicts and lists.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use smartcity_core::bus;
use smartcity_core::city::{self, CityGraph, Span};
use smartcity_core::config::PlatformConfig;
use smartcity_core::geo::{self, EdgeWeighting, GeoError};
use smartcity_core::incident::{self, ClassifierModel, Label};
use smartcity_core::parking::ParkingEvent;
use smartcity_core::platform;
use smartcity_core::scenario;
use smartcity_core::simulator;

create_exception!(smartcity, ApiError, PyException, "Service error with `code` and `http_status`.");

fn api_err(py: Python<'_>, e: platform::ApiError) -> PyErr {
    let err = ApiError::new_err(e.message.clone());
    let value = err.value(py);
    let code = serde_json::to_value(e.code).ok().and_then(|v| v.as_str().map(String::from));
    let _ = value.setattr("code", code);
    let _ = value.setattr("http_status", e.http_status);
    err
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn geo_err(e: GeoError) -> PyErr {
    match e {
        GeoError::UnknownNode(id) => PyKeyError::new_err(id),
        other => value_err(other),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

/// Street network with blocks and a gazetteer.
#[pyclass(frozen, module = "smartcity")]
struct CityMap {
    graph: Arc<CityGraph>,
}

#[pymethods]
impl CityMap {
    #[staticmethod]
    #[pyo3(signature = (path, slot_length = city::DEFAULT_SLOT_LENGTH))]
    fn load(path: &str, slot_length: f64) -> PyResult<Self> {
        let graph = city::load_city_file(path, slot_length).map_err(value_err)?;
        Ok(Self { graph: Arc::new(graph) })
    }

    #[staticmethod]
    #[pyo3(signature = (text, slot_length = city::DEFAULT_SLOT_LENGTH))]
    fn from_json(text: &str, slot_length: f64) -> PyResult<Self> {
        let graph = city::load_city(text, slot_length).map_err(value_err)?;
        Ok(Self { graph: Arc::new(graph) })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.graph.warnings().to_vec()
    }

    fn node_ids(&self) -> Vec<String> {
        self.graph.nodes().iter().map(|n| n.id.clone()).collect()
    }

    fn blocks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.graph.blocks())
    }

    fn is_strongly_connected(&self) -> bool {
        self.graph.is_strongly_connected()
    }

    /// `(x, y)` of a gazetteer place or intersection, or `None`.
    fn resolve_location(&self, text: &str) -> Option<(f64, f64)> {
        self.graph.resolve_location(text).map(|c| (c.x, c.y))
    }

    fn shortest_path<'py>(
        &self,
        py: Python<'py>,
        origin: &str,
        destination: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let route = geo::shortest_path(&self.graph, origin, destination, &EdgeWeighting::identity())
            .map_err(geo_err)?;
        to_py(py, &route)
    }

    #[pyo3(signature = (origin, destination, k = 3))]
    fn k_alternative_paths<'py>(
        &self,
        py: Python<'py>,
        origin: &str,
        destination: &str,
        k: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let routes = geo::k_alternative_paths(
            &self.graph,
            origin,
            destination,
            k,
            &EdgeWeighting::identity(),
        )
        .map_err(geo_err)?;
        to_py(py, &routes)
    }

    fn __repr__(&self) -> String {
        format!(
            "CityMap(nodes={}, edges={}, blocks={})",
            self.graph.node_count(),
            self.graph.edge_count(),
            self.graph.blocks().len()
        )
    }
}

/// Multinomial naive Bayes incident classifier.
#[pyclass(frozen, module = "smartcity")]
struct Classifier {
    model: ClassifierModel,
}

fn parse_corpus(corpus: Vec<(String, String)>) -> PyResult<Vec<(String, Label)>> {
    corpus
        .into_iter()
        .map(|(text, label)| Ok((text, label.parse::<Label>().map_err(value_err)?)))
        .collect()
}

#[pymethods]
impl Classifier {
    /// Trains on `(text, label)` pairs.
    #[staticmethod]
    #[pyo3(signature = (corpus, alpha = incident::DEFAULT_SMOOTHING_ALPHA))]
    fn train(corpus: Vec<(String, String)>, alpha: f64) -> PyResult<Self> {
        let pairs = parse_corpus(corpus)?;
        let model = incident::train_classifier(&pairs, alpha).map_err(value_err)?;
        Ok(Self { model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            model: ClassifierModel::from_json(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.model.to_json()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.model.labels.iter().map(|l| l.as_str().to_string()).collect()
    }

    #[getter]
    fn vocabulary_size(&self) -> usize {
        self.model.vocabulary.len()
    }

    /// `{"label", "confidence", "posteriors"}` for one text.
    fn classify<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.model.classify(text))
    }
}

/// In-process topic log with replayable subscriptions.
#[pyclass(frozen, module = "smartcity")]
struct MessageBus {
    bus: bus::MessageBus,
}

#[pyclass(module = "smartcity")]
struct Subscription {
    inner: bus::Subscription,
}

type Delivery = (String, u64, i64, Vec<u8>);

fn delivery(m: bus::Message) -> Delivery {
    (m.topic, m.seq, m.timestamp, m.payload.to_vec())
}

#[pymethods]
impl MessageBus {
    #[new]
    fn new() -> Self {
        Self {
            bus: bus::MessageBus::new(),
        }
    }

    fn create_topic(&self, name: &str) -> PyResult<()> {
        self.bus.create_topic(name).map(|_| ()).map_err(value_err)
    }

    fn topics(&self) -> Vec<(String, u64)> {
        self.bus.topics().into_iter().map(|t| (t.name, t.next_seq)).collect()
    }

    /// Appends `payload` and returns its sequence number.
    #[pyo3(signature = (topic, payload, timestamp, content_type = "application/json"))]
    fn publish(&self, topic: &str, payload: Vec<u8>, timestamp: i64, content_type: &str) -> PyResult<u64> {
        self.bus
            .publish(topic, content_type, payload, timestamp)
            .map_err(value_err)
    }

    #[pyo3(signature = (topic, from_seq = 0))]
    fn subscribe(&self, topic: &str, from_seq: u64) -> PyResult<Subscription> {
        let inner = self.bus.subscribe(topic, from_seq).map_err(value_err)?;
        Ok(Subscription { inner })
    }

    fn unsubscribe(&self, sub: PyRef<'_, Subscription>) {
        self.bus.unsubscribe(sub.inner.id());
    }
}

#[pymethods]
impl Subscription {
    #[getter]
    fn cursor(&self) -> u64 {
        self.inner.cursor()
    }

    #[getter]
    fn active(&self) -> bool {
        self.inner.is_active()
    }

    /// Every pending message as `(topic, seq, timestamp, payload)`.
    fn drain(&mut self) -> Vec<Delivery> {
        self.inner.drain().into_iter().map(delivery).collect()
    }

    fn try_next(&mut self) -> Option<Delivery> {
        self.inner.try_next().map(delivery)
    }
}

/// The assembled services behind the gateway.
#[pyclass(frozen, module = "smartcity")]
struct Platform {
    inner: platform::Platform,
}

macro_rules! api {
    ($py:expr, $call:expr) => {
        match $call {
            Ok(v) => to_py($py, &v),
            Err(e) => Err(api_err($py, e)),
        }
    };
}

#[pymethods]
impl Platform {
    /// Loads a platform config file; relative paths resolve against it.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        let cfg = PlatformConfig::load(path).map_err(value_err)?;
        let inner = platform::Platform::from_config(&cfg).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn city(&self) -> CityMap {
        CityMap {
            graph: Arc::new(self.inner.graph().clone()),
        }
    }

    fn health<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.health())
    }

    fn blocks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.blocks())
    }

    fn block<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        api!(py, self.inner.block(id))
    }

    fn active_incidents<'py>(&self, py: Python<'py>, t: i64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.active_incidents(t))
    }

    fn ranking<'py>(
        &self,
        py: Python<'py>,
        x: f64,
        y: f64,
        radius: f64,
        t: i64,
    ) -> PyResult<Bound<'py, PyAny>> {
        api!(py, self.inner.ranking(x, y, radius, t))
    }

    #[pyo3(signature = (origin, destination, t, k = 3))]
    fn routes<'py>(
        &self,
        py: Python<'py>,
        origin: &str,
        destination: &str,
        t: i64,
        k: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        api!(py, self.inner.routes(origin, destination, t, k))
    }

    /// Publishes a report dict and processes it; returns the outcome.
    fn submit_report<'py>(
        &self,
        py: Python<'py>,
        report: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let report: incident::TextReport = from_py(report)?;
        api!(py, self.inner.submit_report(&report))
    }

    fn submit_parking_event<'py>(
        &self,
        py: Python<'py>,
        event: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let event: ParkingEvent = from_py(event)?;
        api!(py, self.inner.submit_parking_event(&event))
    }

    /// Drains pending bus messages; returns the cumulative counters.
    fn pump<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.detach(|| self.inner.pump());
        to_py(py, &self.inner.pump_counters())
    }

    /// Runs a scenario given as JSON text and returns the report.
    fn run_scenario<'py>(&self, py: Python<'py>, scenario: &str) -> PyResult<Bound<'py, PyAny>> {
        let parsed = scenario::parse_scenario(scenario).map_err(value_err)?;
        let report = py
            .detach(|| scenario::run_scenario(&self.inner, &parsed))
            .map_err(value_err)?;
        to_py(py, &report)
    }
}

/// Slots left on a block of `usable_length` meters after removing the
/// prohibited and garage spans.
#[pyfunction]
#[pyo3(signature = (usable_length, prohibited = vec![], garages = vec![], slot_length = city::DEFAULT_SLOT_LENGTH))]
fn derive_capacity(usable_length: f64, prohibited: Vec<Span>, garages: Vec<Span>, slot_length: f64) -> u32 {
    city::derive_capacity(usable_length, &prohibited, &garages, slot_length)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    incident::tokenize(text)
}

/// Train/test split accuracy on `(text, label)` pairs.
#[pyfunction]
#[pyo3(signature = (corpus, train_fraction = 0.8, alpha = incident::DEFAULT_SMOOTHING_ALPHA))]
fn evaluate_classifier<'py>(
    py: Python<'py>,
    corpus: Vec<(String, String)>,
    train_fraction: f64,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let pairs = parse_corpus(corpus)?;
    let metrics = scenario::evaluate_classifier(&pairs, train_fraction, alpha).map_err(value_err)?;
    to_py(py, &metrics)
}

/// Simulated meter events and reports for the platform's configured
/// simulation, as `{"parking_events", "reports", "corpus"}`.
#[pyfunction]
#[pyo3(signature = (platform, corpus_size = 200))]
fn simulate<'py>(
    py: Python<'py>,
    platform: &Platform,
    corpus_size: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = &platform.inner;
    let sim = p.simulation();
    let graph = p.graph();
    let parking = simulator::simulate_parking(sim, graph).map_err(value_err)?;
    let reports =
        simulator::simulate_reports(sim, graph.gazetteer(), p.templates()).map_err(value_err)?;
    let corpus = simulator::labeled_corpus(sim, graph.gazetteer(), p.templates(), corpus_size)
        .map_err(value_err)?;
    to_py(
        py,
        &serde_json::json!({
            "parking_events": parking.events,
            "reports": reports.reports,
            "corpus": corpus,
        }),
    )
}

#[pymodule]
fn smartcity(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ApiError", m.py().get_type::<ApiError>())?;
    m.add_class::<CityMap>()?;
    m.add_class::<Classifier>()?;
    m.add_class::<MessageBus>()?;
    m.add_class::<Subscription>()?;
    m.add_class::<Platform>()?;
    m.add_function(wrap_pyfunction!(derive_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_classifier, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}

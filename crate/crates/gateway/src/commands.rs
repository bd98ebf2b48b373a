//! Operator commands behind the CLI.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use smartcity_core::config::PlatformConfig;
use smartcity_core::incident::{train_classifier, Label};
use smartcity_core::platform::Platform;
use smartcity_core::scenario::{parse_scenario, run_scenario, ScenarioReport};
use smartcity_core::simulator::{
    from_ndjson, labeled_corpus, simulate_parking, simulate_reports, to_ndjson, GroundTruth,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub text: String,
    pub label: Label,
}

pub fn load_platform(config: &Path) -> Result<Platform> {
    let cfg = PlatformConfig::load(config)
        .with_context(|| format!("loading config {}", config.display()))?;
    Platform::from_config(&cfg).context("starting platform")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateSummary {
    pub parking_events: usize,
    pub reports: usize,
    pub corpus: usize,
}

/// Writes the simulator streams as newline-delimited JSON into `out`.
pub fn simulate(config: &Path, out: &Path, corpus_size: usize) -> Result<SimulateSummary> {
    let platform = load_platform(config)?;
    let sim = platform.simulation();
    let graph = platform.graph();
    let parking = simulate_parking(sim, graph).context("simulating parking")?;
    let reports =
        simulate_reports(sim, graph.gazetteer(), platform.templates()).context("simulating reports")?;
    let corpus: Vec<CorpusRecord> =
        labeled_corpus(sim, graph.gazetteer(), platform.templates(), corpus_size)
            .context("generating corpus")?
            .into_iter()
            .map(|(text, label)| CorpusRecord { text, label })
            .collect();
    let truth = GroundTruth {
        incidents: reports.truth.incidents.clone(),
        labels: reports.truth.labels.clone(),
        ..parking.truth.clone()
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, text: String| {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };
    write("parking_events.ndjson", to_ndjson(&parking.events))?;
    write("reports.ndjson", to_ndjson(&reports.reports))?;
    write("corpus.ndjson", to_ndjson(&corpus))?;
    write(
        "ground_truth.json",
        serde_json::to_string_pretty(&truth)? + "\n",
    )?;
    Ok(SimulateSummary {
        parking_events: parking.events.len(),
        reports: reports.reports.len(),
        corpus: corpus.len(),
    })
}

/// Trains a classifier from a labeled corpus file and writes the model.
pub fn train(corpus: &Path, out: &Path, smoothing_alpha: f64) -> Result<(usize, usize)> {
    let text =
        fs::read_to_string(corpus).with_context(|| format!("reading {}", corpus.display()))?;
    let records: Vec<CorpusRecord> = from_ndjson(&text).context("parsing corpus")?;
    if records.is_empty() {
        bail!("corpus {} is empty", corpus.display());
    }
    let pairs: Vec<(String, Label)> = records.into_iter().map(|r| (r.text, r.label)).collect();
    let model = train_classifier(&pairs, smoothing_alpha)?;
    fs::write(out, model.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
    Ok((model.labels.len(), model.vocabulary.len()))
}

/// Runs a scenario file and writes the canonical report.
pub fn scenario(config: &Path, scenario: &Path, report: &Path) -> Result<ScenarioReport> {
    let platform = load_platform(config)?;
    let text = fs::read_to_string(scenario)
        .with_context(|| format!("reading {}", scenario.display()))?;
    let parsed = parse_scenario(&text)?;
    let result = run_scenario(&platform, &parsed)?;
    fs::write(report, result.to_pretty_json())
        .with_context(|| format!("writing {}", report.display()))?;
    Ok(result)
}

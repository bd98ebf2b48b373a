//! Platform configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::city::DEFAULT_SLOT_LENGTH;
use crate::incident::{DurationTable, DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_SMOOTHING_ALPHA};
use crate::parking::{DEFAULT_ALPHA, DEFAULT_LAMBDA};
use crate::route::{DEFAULT_BLOCK_RADIUS, DEFAULT_PENALTY_FACTOR};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(String),
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Tunable service parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub confidence: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub block_radius: f64,
    pub penalty_factor: f64,
    pub slot_length: f64,
    pub smoothing_alpha: f64,
    pub durations: DurationTable,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            confidence: DEFAULT_CONFIDENCE_THRESHOLD,
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
            block_radius: DEFAULT_BLOCK_RADIUS,
            penalty_factor: DEFAULT_PENALTY_FACTOR,
            slot_length: DEFAULT_SLOT_LENGTH,
            smoothing_alpha: DEFAULT_SMOOTHING_ALPHA,
            durations: DurationTable::default(),
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |name, value: f64, ok: bool, range| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { name, value, range })
            }
        };
        check("confidence", self.confidence, (0.0..=1.0).contains(&self.confidence), "[0, 1]")?;
        check("alpha", self.alpha, (0.0..=1.0).contains(&self.alpha), "[0, 1]")?;
        check("lambda", self.lambda, self.lambda > 0.0, "(0, inf)")?;
        check("block_radius", self.block_radius, self.block_radius > 0.0, "(0, inf)")?;
        check("penalty_factor", self.penalty_factor, self.penalty_factor >= 1.0, "[1, inf)")?;
        check("slot_length", self.slot_length, self.slot_length > 0.0, "(0, inf)")?;
        check(
            "smoothing_alpha",
            self.smoothing_alpha,
            self.smoothing_alpha > 0.0,
            "(0, inf)",
        )?;
        self.durations.validate().map_err(ConfigError::Invalid)
    }
}

/// Where the incident classifier comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSource {
    /// Newline-delimited `{"text", "label"}` records.
    Corpus(PathBuf),
    /// A model written by `train`.
    Model(PathBuf),
    /// Template corpus of `n` documents from the simulator seed.
    Generate { n: usize },
}

impl Default for ClassifierSource {
    fn default() -> Self {
        ClassifierSource::Generate { n: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformConfig {
    pub map: PathBuf,
    /// Replaces the map document's gazetteer when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gazetteer: Option<PathBuf>,
    #[serde(default)]
    pub classifier: ClassifierSource,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulator: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default = "default_cors")]
    pub cors_origins: Vec<String>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".to_string()
}

fn default_cors() -> Vec<String> {
    vec!["*".to_string()]
}

impl PlatformConfig {
    pub fn for_map(map: impl Into<PathBuf>) -> Self {
        Self {
            map: map.into(),
            gazetteer: None,
            classifier: ClassifierSource::default(),
            thresholds: Thresholds::default(),
            listen: default_listen(),
            simulator: None,
            templates: None,
            cors_origins: default_cors(),
        }
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.map);
        self.gazetteer.as_mut().map(fix);
        self.simulator.as_mut().map(fix);
        self.templates.as_mut().map(fix);
        match &mut self.classifier {
            ClassifierSource::Corpus(p) | ClassifierSource::Model(p) => fix(p),
            ClassifierSource::Generate { .. } => {}
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut files = vec![&self.map];
        files.extend(self.gazetteer.iter());
        files.extend(self.simulator.iter());
        files.extend(self.templates.iter());
        if let ClassifierSource::Corpus(p) | ClassifierSource::Model(p) = &self.classifier {
            files.push(p);
        }
        for f in files {
            if !f.is_file() {
                return Err(ConfigError::MissingFile(f.display().to_string()));
            }
        }
        if let ClassifierSource::Generate { n: 0 } = self.classifier {
            return Err(ConfigError::Invalid("generated corpus needs n >= 1".into()));
        }
        self.thresholds.validate()
    }
}

//! Scenario files: one TOML document describes one experiment.
//!
//! A scenario pins the network size, sampling step, horizon, node labels, one
//! labeled parameter block per virus, optional explicit initial compartments,
//! and optional observer settings. The canonical example ships with the crate
//! as `scenarios/europe.scenario` and is embedded as [`Scenario::europe`].
//!
//! ```toml
//! schema_version = 1
//! name = "example"
//! n = 2            # nodes
//! m = 1            # viruses
//! h = 1.0          # sampling step
//! horizon = 100
//! node_labels = ["a", "b"]
//!
//! [[virus]]
//! label = "v"
//! B = [[0.1, 0.2], [0.0, 0.3]]   # row i: rates into node i
//! gamma = [0.4, 0.5]
//! c = [1.0, 1.0]
//! x0 = [0.01, 0.0]
//!
//! # optional: s0, r0 (default: r0 = 0, s0 fills the simplex)
//! # optional observer block:
//! [observer]
//! L = [0.5, 0.5]
//! x_hat0 = "from-output"   # or "zero"
//! error_threshold = 0.1
//! ```

use crate::model::{
    implied_susceptible, DimensionError, EpidemicState, ModelConfig, ValidationReport, VirusParams,
};
use crate::observer::{ObserverConfig, DEFAULT_ERROR_THRESHOLD, DEFAULT_GAIN};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

const EUROPE: &str = include_str!("../scenarios/europe.scenario");

/// On-disk form of a scenario, mirroring the TOML schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub horizon: usize,
    pub node_labels: Vec<String>,
    #[serde(rename = "virus")]
    pub viruses: Vec<VirusBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverBlock>,
}

/// Parameters of one virus: infection matrix (row-major), healing rates,
/// measurement coefficients, and initial infections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirusBlock {
    pub label: String,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub c: Vec<f64>,
    pub x0: Vec<f64>,
}

/// Observer settings bundled with a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverBlock {
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    #[serde(default)]
    pub x_hat0: InitPolicy,
    #[serde(default = "default_error_threshold")]
    pub error_threshold: f64,
}

fn default_error_threshold() -> f64 {
    DEFAULT_ERROR_THRESHOLD
}

/// How the observer seeds its infection estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Split the first output equally across viruses, inverted through each
    /// virus's measurement coefficient.
    #[default]
    FromOutput,
    /// Start every estimate at zero.
    Zero,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Shape(String),
    #[error("unsupported schema version {found} (this build reads version {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("scenario fails validation:\n{0}")]
    Invalid(ValidationReport),
}

impl From<DimensionError> for ScenarioError {
    fn from(e: DimensionError) -> Self {
        ScenarioError::Shape(e.0)
    }
}

/// A parsed scenario: the file contents plus the model built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub model: ModelConfig,
}

impl Scenario {
    /// Parses a scenario and checks its structure (dimensions, labels).
    /// Model assumptions are *not* enforced here; see [`Scenario::validated`].
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion {
                found: file.schema_version,
            });
        }
        let model = file.build_model()?;
        Ok(Self { file, model })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The bundled two-virus Europe scenario.
    pub fn europe() -> Self {
        Self::parse(EUROPE).expect("bundled scenario must parse")
    }

    /// Returns the scenario if the model passes validation, the violation
    /// report otherwise.
    pub fn validated(self) -> Result<Self, ScenarioError> {
        let report = self.model.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(ScenarioError::Invalid(report))
        }
    }

    /// Serializes back to TOML. Parsing the result reproduces the scenario.
    pub fn emit(&self) -> String {
        toml::to_string(&self.file).expect("scenario files serialize")
    }

    /// Replaces the sampling step and rebuilds the model.
    pub fn set_step_size(&mut self, h: f64) -> Result<(), ScenarioError> {
        self.file.h = h;
        self.model = self.file.build_model()?;
        Ok(())
    }

    /// Replaces the horizon and rebuilds the model.
    pub fn set_horizon(&mut self, horizon: usize) -> Result<(), ScenarioError> {
        self.file.horizon = horizon;
        self.model = self.file.build_model()?;
        Ok(())
    }

    pub fn virus_labels(&self) -> Vec<&str> {
        self.file.viruses.iter().map(|v| v.label.as_str()).collect()
    }

    pub fn node_labels(&self) -> Vec<&str> {
        self.file.node_labels.iter().map(String::as_str).collect()
    }

    /// Observer configuration from the scenario's observer block, or the
    /// defaults when the block is absent. `y0` is the first measured output,
    /// consumed by the from-output initialization policy.
    pub fn observer_config(&self, y0: &DVector<f64>) -> ObserverConfig {
        let n = self.model.node_count;
        let (gain, policy, threshold) = match &self.file.observer {
            Some(block) => (
                DVector::from_vec(block.l.clone()),
                block.x_hat0,
                block.error_threshold,
            ),
            None => (
                DVector::from_element(n, DEFAULT_GAIN),
                InitPolicy::FromOutput,
                DEFAULT_ERROR_THRESHOLD,
            ),
        };
        let mut config = match policy {
            InitPolicy::FromOutput => ObserverConfig::from_first_output(y0, &self.model, gain),
            InitPolicy::Zero => ObserverConfig::zero_init(&self.model, gain),
        };
        config.error_threshold = threshold;
        config
    }
}

impl ScenarioFile {
    fn build_model(&self) -> Result<ModelConfig, ScenarioError> {
        let n = self.n;
        if n == 0 {
            return Err(ScenarioError::Shape("n must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(ScenarioError::Shape("m must be at least 1".into()));
        }
        if self.node_labels.len() != n {
            return Err(ScenarioError::Shape(format!(
                "node_labels has {} entries, expected n = {n}",
                self.node_labels.len()
            )));
        }
        if self.viruses.len() != self.m {
            return Err(ScenarioError::Shape(format!(
                "{} virus blocks, expected m = {}",
                self.viruses.len(),
                self.m
            )));
        }

        let mut viruses = Vec::with_capacity(self.m);
        for block in &self.viruses {
            let label = &block.label;
            if block.b.len() != n {
                return Err(ScenarioError::Shape(format!(
                    "virus '{label}': B has {} rows, expected {n}",
                    block.b.len()
                )));
            }
            for (i, row) in block.b.iter().enumerate() {
                if row.len() != n {
                    return Err(ScenarioError::Shape(format!(
                        "virus '{label}': B row {i} has {} entries, expected {n}",
                        row.len()
                    )));
                }
            }
            for (field, values) in [("gamma", &block.gamma), ("c", &block.c), ("x0", &block.x0)] {
                if values.len() != n {
                    return Err(ScenarioError::Shape(format!(
                        "virus '{label}': {field} has {} entries, expected {n}",
                        values.len()
                    )));
                }
            }
            let beta = DMatrix::from_fn(n, n, |i, j| block.b[i][j]);
            viruses.push(VirusParams::new(
                beta,
                DVector::from_vec(block.gamma.clone()),
                DVector::from_vec(block.c.clone()),
            )?);
        }

        for (field, values) in [("s0", &self.s0), ("r0", &self.r0)] {
            if let Some(values) = values {
                if values.len() != n {
                    return Err(ScenarioError::Shape(format!(
                        "{field} has {} entries, expected {n}",
                        values.len()
                    )));
                }
            }
        }
        if let Some(block) = &self.observer {
            if block.l.len() != n {
                return Err(ScenarioError::Shape(format!(
                    "observer: L has {} entries, expected {n}",
                    block.l.len()
                )));
            }
        }

        let infected: Vec<DVector<f64>> = self
            .viruses
            .iter()
            .map(|b| DVector::from_vec(b.x0.clone()))
            .collect();
        let recovered = match &self.r0 {
            Some(r0) => DVector::from_vec(r0.clone()),
            None => DVector::zeros(n),
        };
        let susceptible = match &self.s0 {
            Some(s0) => DVector::from_vec(s0.clone()),
            None => implied_susceptible(&infected, &recovered),
        };
        let initial = EpidemicState::new(susceptible, infected, recovered)?;
        Ok(ModelConfig::new(self.h, viruses, initial, self.horizon)?)
    }
}

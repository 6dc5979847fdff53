use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::AssignmentMatrix;
use crate::model::{CompatModel, Issue, JobClass, JobType};

/// Policies a sweep can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// Token bucket with balanced fairness, exact.
    ExactDynamic,
    /// Token bucket with first-come-first-served service, simulated.
    DynamicFcfs,
    /// Token bucket with balanced fairness, simulated.
    DynamicBf,
    /// Randomized insensitive load balancing with balanced fairness, simulated.
    Randomized,
    /// Static assignment spreading offered load evenly, exact.
    StaticBest,
    /// Static equal split over compatible classes, exact.
    StaticUniform,
    /// Static assignment read from the config, exact.
    StaticCustom,
    /// Max-flow lower bound.
    Ideal,
}

impl Policy {
    pub const ALL: [Policy; 8] = [
        Policy::ExactDynamic,
        Policy::DynamicFcfs,
        Policy::DynamicBf,
        Policy::Randomized,
        Policy::StaticBest,
        Policy::StaticUniform,
        Policy::StaticCustom,
        Policy::Ideal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::ExactDynamic => "exact-dynamic",
            Policy::DynamicFcfs => "dynamic-fcfs",
            Policy::DynamicBf => "dynamic-bf",
            Policy::Randomized => "randomized",
            Policy::StaticBest => "static-best",
            Policy::StaticUniform => "static-uniform",
            Policy::StaticCustom => "static-custom",
            Policy::Ideal => "ideal",
        }
    }

    pub fn is_simulated(self) -> bool {
        matches!(self, Policy::DynamicFcfs | Policy::DynamicBf | Policy::Randomized)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Servers, types and classes, with 0-based indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub capacities: Vec<f64>,
    pub types: Vec<JobType>,
    pub classes: Vec<JobClass>,
}

impl ModelSpec {
    pub fn from_model(model: &CompatModel) -> Self {
        ModelSpec {
            capacities: model.capacities().to_vec(),
            types: model.types().to_vec(),
            classes: model.classes().to_vec(),
        }
    }

    pub fn build(&self) -> Result<CompatModel> {
        CompatModel::new(self.capacities.clone(), self.types.clone(), self.classes.clone())
    }
}

/// Replication protocol of the simulated policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub runs: usize,
    pub warmup_events: u64,
    pub measured_events: u64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            runs: 20,
            warmup_events: 100_000,
            measured_events: 200_000,
            seed: 1,
        }
    }
}

/// A load sweep: one model, several policies, a grid of loads.
///
/// Loads are reached by scaling every arrival rate by the same factor; the
/// rates written in the model correspond to `rho = sum nu / sum mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub policies: Vec<Policy>,
    pub rho_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Rows of the `static-custom` assignment, one per type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_assignment: Option<Vec<Vec<f64>>>,
    pub model: ModelSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // unknown policies surface as their own error
            let unknown = msg
                .split_once("unknown policy `")
                .and_then(|(_, rest)| rest.split_once('`'));
            match unknown {
                Some((name, _)) => Error::UnknownPolicy(name.to_string()),
                None => Error::Config(msg.trim_end().to_string()),
            }
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The model at its nominal rates, validated.
    pub fn model(&self) -> Result<CompatModel> {
        let m = self.model.build()?;
        m.ensure_valid()?;
        Ok(m)
    }

    /// Soft issues of the model, such as classes that are not separable.
    pub fn warnings(&self) -> Vec<Issue> {
        self.model
            .build()
            .map(|m| m.validate().warnings)
            .unwrap_or_default()
    }

    pub fn custom(&self) -> Option<AssignmentMatrix> {
        self.custom_assignment.clone().map(AssignmentMatrix::new)
    }

    fn check(&self) -> Result<()> {
        let model = self.model()?;
        if let Some(&bad) = self.rho_grid.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Config(format!("load {bad} in rho_grid is not positive")));
        }
        let s = &self.simulation;
        if s.runs == 0 || s.measured_events == 0 {
            return Err(Error::Config(
                "simulation runs and measured_events must be positive".into(),
            ));
        }
        match self.custom() {
            Some(a) => a.check(&model)?,
            None if self.policies.contains(&Policy::StaticCustom) => {
                return Err(Error::Config(
                    "static-custom needs a custom_assignment".into(),
                ))
            }
            None => {}
        }
        Ok(())
    }
}

/// Reads and validates an experiment file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

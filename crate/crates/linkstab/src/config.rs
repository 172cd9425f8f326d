//! JSON configuration files: the live monitor config and scenario files.
//!
//! Both share the same skeleton (params + lines); scenario files swap the
//! probe-target panel for scripted link models plus a seed and a length.

use std::fs;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, StabilityParams};
use crate::probe::{LineBinding, ProbeError, ProbeTarget, SourceBinding};
use crate::sim::{LinkModel, Phase, PhaseKind, Scenario, SimError};

pub const DEFAULT_SCALE_BASE: u32 = 10;
pub const DEFAULT_ADMISSION_THRESHOLD: f64 = 0.90;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error(transparent)]
    Target(#[from] ProbeError),
    #[error("params.line_count is {expected} but {got} lines are configured")]
    LineCountMismatch { expected: u32, got: usize },
    #[error("params.max_tick is {expected} but {got} targets are configured")]
    TargetCountMismatch { expected: u32, got: usize },
    #[error("duplicate line name {0:?}")]
    DuplicateLineName(String),
    #[error("duplicate target label {0:?}")]
    DuplicateTargetLabel(String),
    #[error("line {name:?}: {reason}")]
    InvalidLine { name: String, reason: String },
    #[error("admission_threshold {0} is outside [0, 1]")]
    InvalidAdmissionThreshold(f64),
    #[error("scale_base must be >= 1")]
    InvalidScaleBase,
    #[error(transparent)]
    Scenario(#[from] SimError),
}

fn default_scale_base() -> u32 {
    DEFAULT_SCALE_BASE
}

fn default_admission_threshold() -> f64 {
    DEFAULT_ADMISSION_THRESHOLD
}

fn default_weights_path() -> PathBuf {
    PathBuf::from("weights.json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineConfig {
    pub name: String,
    /// Local IP address or interface name the line's probes bind to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub bandwidth_mbps: f64,
}

impl LineConfig {
    fn binding(&self, id: u32) -> Result<LineBinding, ConfigError> {
        let source = match self.source.as_deref() {
            None => None,
            Some("") => {
                return Err(ConfigError::InvalidLine {
                    name: self.name.clone(),
                    reason: "source must be an IP address or interface name".into(),
                })
            }
            Some(s) => Some(match s.parse::<IpAddr>() {
                Ok(addr) => SourceBinding::Address(addr),
                Err(_) => SourceBinding::Interface(s.to_string()),
            }),
        };
        Ok(LineBinding {
            id,
            name: self.name.clone(),
            source,
            bandwidth_mbps: self.bandwidth_mbps,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetConfig {
    pub label: String,
    pub url: String,
}

/// Configuration for the live measurement loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppConfig {
    pub params: StabilityParams,
    pub lines: Vec<LineConfig>,
    pub targets: Vec<TargetConfig>,
    #[serde(default = "default_scale_base")]
    pub scale_base: u32,
    #[serde(default = "default_admission_threshold")]
    pub admission_threshold: f64,
    /// JSONL iteration log, created fresh on startup.
    pub log_path: PathBuf,
    /// Weight table output, rewritten whole each iteration.
    #[serde(default = "default_weights_path")]
    pub weights_path: PathBuf,
    /// Embed per-probe outcomes in the log.
    #[serde(default)]
    pub log_probes: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let config: AppConfig = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        if self.lines.len() != self.params.line_count as usize {
            return Err(ConfigError::LineCountMismatch {
                expected: self.params.line_count,
                got: self.lines.len(),
            });
        }
        if self.targets.len() != self.params.max_tick as usize {
            return Err(ConfigError::TargetCountMismatch {
                expected: self.params.max_tick,
                got: self.targets.len(),
            });
        }
        check_unique_names(self.lines.iter().map(|l| l.name.as_str()))?;
        let mut labels: Vec<&str> = self.targets.iter().map(|t| t.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(dup) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::DuplicateTargetLabel(dup[0].to_string()));
        }
        self.line_bindings()?;
        self.probe_targets()?;
        if !(0.0..=1.0).contains(&self.admission_threshold) {
            return Err(ConfigError::InvalidAdmissionThreshold(
                self.admission_threshold,
            ));
        }
        if self.scale_base < 1 {
            return Err(ConfigError::InvalidScaleBase);
        }
        Ok(())
    }

    /// Lines with 1-based ids in configuration order.
    pub fn line_bindings(&self) -> Result<Vec<LineBinding>, ConfigError> {
        self.lines
            .iter()
            .enumerate()
            .map(|(idx, line)| {
                let binding = line.binding(idx as u32 + 1)?;
                if !(binding.bandwidth_mbps.is_finite() && binding.bandwidth_mbps > 0.0) {
                    return Err(ConfigError::InvalidLine {
                        name: line.name.clone(),
                        reason: format!("bandwidth_mbps {} must be > 0", line.bandwidth_mbps),
                    });
                }
                Ok(binding)
            })
            .collect()
    }

    pub fn probe_targets(&self) -> Result<Vec<ProbeTarget>, ConfigError> {
        self.targets
            .iter()
            .map(|t| Ok(ProbeTarget::new(&t.label, &t.url)?))
            .collect()
    }

    pub fn line_names(&self) -> Vec<String> {
        self.lines.iter().map(|l| l.name.clone()).collect()
    }
}

fn check_unique_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), ConfigError> {
    let mut seen: Vec<&str> = names.collect();
    seen.sort_unstable();
    if let Some(dup) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(ConfigError::DuplicateLineName(dup[0].to_string()));
    }
    Ok(())
}

/// One scripted stretch: either an exact tick or a per-target success
/// probability, never both.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseConfig {
    Fixed {
        iterations: u64,
        tick: u32,
    },
    Random {
        iterations: u64,
        success_probability: f64,
    },
}

impl From<&PhaseConfig> for Phase {
    fn from(config: &PhaseConfig) -> Phase {
        match *config {
            PhaseConfig::Fixed { iterations, tick } => Phase {
                iterations,
                kind: PhaseKind::FixedTick(tick),
            },
            PhaseConfig::Random {
                iterations,
                success_probability,
            } => Phase {
                iterations,
                kind: PhaseKind::Bernoulli(success_probability),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// 1-based line id the script applies to.
    pub line: u32,
    pub phases: Vec<PhaseConfig>,
}

/// A scenario file: the config skeleton with scripted links instead of a
/// target panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub params: StabilityParams,
    pub lines: Vec<LineConfig>,
    #[serde(default = "default_scale_base")]
    pub scale_base: u32,
    pub seed: u64,
    pub length: u64,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub log_probes: bool,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file: ScenarioFile = read_json(path)?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.lines.len() != self.params.line_count as usize {
            return Err(ConfigError::LineCountMismatch {
                expected: self.params.line_count,
                got: self.lines.len(),
            });
        }
        check_unique_names(self.lines.iter().map(|l| l.name.as_str()))?;
        for line in &self.lines {
            if !(line.bandwidth_mbps.is_finite() && line.bandwidth_mbps > 0.0) {
                return Err(ConfigError::InvalidLine {
                    name: line.name.clone(),
                    reason: format!("bandwidth_mbps {} must be > 0", line.bandwidth_mbps),
                });
            }
        }
        if self.scale_base < 1 {
            return Err(ConfigError::InvalidScaleBase);
        }
        self.to_scenario().validate()?;
        Ok(())
    }

    pub fn to_scenario(&self) -> Scenario {
        Scenario {
            params: self.params.clone(),
            models: self
                .models
                .iter()
                .map(|m| LinkModel {
                    line: m.line,
                    phases: m.phases.iter().map(Phase::from).collect(),
                })
                .collect(),
            seed: self.seed,
            length: self.length,
            bandwidths: self.lines.iter().map(|l| l.bandwidth_mbps).collect(),
            scale_base: self.scale_base,
        }
    }

    pub fn line_names(&self) -> Vec<String> {
        self.lines.iter().map(|l| l.name.clone()).collect()
    }
}

//! Campaign configuration.
//!
//! Loaded from TOML. Relative paths are resolved against the directory of the
//! file they appear in, so a resolved configuration only holds absolute paths
//! and reloads to an equal value from any working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{PromptBudget, RemoteSettings};
use crate::opsel::SAParams;
use crate::oracle::ToleranceConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{what} {path} does not exist")]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// When the campaign stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Budget {
    Iterations(u64),
    /// Wall-clock hours, summed over every session of the campaign.
    Hours(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<u64>,
}

impl AgentConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            temperature: None,
            max_tokens: None,
            timeout_s: None,
        }
    }

    pub fn remote_settings(&self) -> RemoteSettings {
        let mut s = RemoteSettings::new(&self.endpoint, &self.model);
        s.api_key_env = self.api_key_env.clone();
        if let Some(t) = self.timeout_s {
            s.timeout_s = t;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    /// Replay agent replies from a transcript instead of calling a server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_transcript: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AgentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<AgentConfig>,
}

pub const DEFAULT_GENERATION_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_ANALYSIS_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

impl LlmConfig {
    pub fn generation_temperature(&self) -> f64 {
        self.generation
            .as_ref()
            .and_then(|a| a.temperature)
            .unwrap_or(DEFAULT_GENERATION_TEMPERATURE)
    }

    pub fn analysis_temperature(&self) -> f64 {
        self.analysis
            .as_ref()
            .and_then(|a| a.temperature)
            .unwrap_or(DEFAULT_ANALYSIS_TEMPERATURE)
    }

    pub fn max_tokens(agent: Option<&AgentConfig>) -> u32 {
        agent.and_then(|a| a.max_tokens).unwrap_or(DEFAULT_MAX_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExecutorConfig {
    /// In-process executor; never runs the test programs.
    Scripted {
        #[serde(default = "yes")]
        planted_faults: bool,
    },
    /// External shim speaking the frame protocol on stdin/stdout.
    Shim { command: Vec<String> },
}

fn yes() -> bool {
    true
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig::Scripted { planted_faults: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Repair attempts allowed in a row before falling back to default generation.
    pub repair_window: u32,
    /// Per-backend execution limit in seconds.
    pub timeout_s: f64,
    /// Rewrite state.snapshot every this many iterations (and at the end).
    pub snapshot_every: u64,
    pub prompt: PromptBudget,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            repair_window: 1,
            timeout_s: 10.0,
            snapshot_every: 1,
            prompt: PromptBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Profile directory or profile.toml.
    pub profile: PathBuf,
    /// Operator-set TOML file.
    pub opset: PathBuf,
    pub budget: Budget,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: ToleranceConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub executor: ExecutorConfig,
    #[serde(default)]
    pub sa: SAParams,
    #[serde(default, rename = "loop")]
    pub loop_: LoopConfig,
}

impl CampaignConfig {
    pub fn new(profile: impl Into<PathBuf>, opset: impl Into<PathBuf>, budget: Budget) -> Self {
        Self {
            profile: profile.into(),
            opset: opset.into(),
            budget,
            seed: 0,
            workdir: None,
            tolerance: ToleranceConfig::default(),
            llm: LlmConfig::default(),
            executor: ExecutorConfig::default(),
            sa: SAParams::default(),
            loop_: LoopConfig::default(),
        }
    }

    /// Parse TOML and resolve relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut config: CampaignConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: base.to_path_buf(),
            message: e.to_string(),
        })?;
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = absolute(base);
        Self::from_toml(&text, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Make every path absolute, relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = absolute(&base.join(&*p));
            }
        };
        fix(&mut self.profile);
        fix(&mut self.opset);
        if let Some(w) = &mut self.workdir {
            fix(w);
        }
        if let Some(t) = &mut self.llm.mock_transcript {
            fix(t);
        }
    }

    /// Check value ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        match self.budget {
            Budget::Hours(h) if !(h.is_finite() && h >= 0.0) => {
                return invalid("budget.hours must be a non-negative number")
            }
            _ => {}
        }
        if !self.tolerance.is_valid() {
            return invalid("tolerance atol and rtol must be non-negative");
        }
        self.sa
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.loop_.repair_window == 0 {
            return invalid("loop.repair_window must be at least 1");
        }
        if !(self.loop_.timeout_s > 0.0 && self.loop_.timeout_s.is_finite()) {
            return invalid("loop.timeout_s must be positive");
        }
        if self.loop_.snapshot_every == 0 {
            return invalid("loop.snapshot_every must be at least 1");
        }
        let llm = &self.llm;
        match (&llm.mock_transcript, &llm.analysis, &llm.generation) {
            (Some(_), _, _) => {}
            (None, Some(_), Some(_)) => {}
            _ => {
                return invalid(
                    "llm needs either mock_transcript or both [llm.analysis] and [llm.generation]",
                )
            }
        }
        if let ExecutorConfig::Shim { command } = &self.executor {
            if command.is_empty() {
                return invalid("executor.command is empty");
            }
        }
        exists("profile", &self.profile)?;
        exists("operator set", &self.opset)?;
        if let Some(t) = &llm.mock_transcript {
            exists("mock transcript", t)?;
        }
        Ok(())
    }
}

fn exists(what: &'static str, path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingFile {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

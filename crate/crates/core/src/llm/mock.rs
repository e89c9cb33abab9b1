//! Transcript-replay backend for hermetic runs.
//!
//! A transcript is a TOML file of responses keyed by agent, loop mode and
//! iteration. Mode and iteration may be omitted to make an entry match any
//! value; the most specific matching entry wins.
//!
//! ```toml
//! [[response]]
//! agent = "generation"
//! mode = "default"
//! iteration = 0
//! text = '''
//! ```python
//! class Model: ...
//! ```
//! '''
//!
//! [[response]]
//! agent = "analysis"
//! text = "Next testing strategy: use more operators."
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::LoopMode;

use super::backend::{AgentRole, ChatBackend, ChatRequest};
use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub agent: AgentRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LoopMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u64>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    #[serde(default)]
    pub response: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| LlmError::Transcript(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        toml::from_str(text).map_err(|e| LlmError::Transcript(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("transcript serializes")
    }

    pub fn push(&mut self, agent: AgentRole, mode: Option<LoopMode>, iteration: Option<u64>, text: impl Into<String>) {
        self.response.push(TranscriptEntry {
            agent,
            mode,
            iteration,
            text: text.into(),
        });
    }
}

type Key = (AgentRole, Option<LoopMode>, Option<u64>);

/// Replays a [`Transcript`]; never touches the network.
#[derive(Debug, Clone)]
pub struct MockBackend {
    entries: HashMap<Key, String>,
    name: String,
}

impl MockBackend {
    pub fn new(transcript: &Transcript) -> Self {
        let mut entries = HashMap::new();
        for e in &transcript.response {
            // first definition wins
            entries
                .entry((e.agent, e.mode, e.iteration))
                .or_insert_with(|| e.text.clone());
        }
        Self {
            entries,
            name: "mock".into(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn lookup(&self, agent: AgentRole, mode: LoopMode, iteration: u64) -> Option<&str> {
        [
            (agent, Some(mode), Some(iteration)),
            (agent, None, Some(iteration)),
            (agent, Some(mode), None),
            (agent, None, None),
        ]
        .iter()
        .find_map(|k| self.entries.get(k))
        .map(String::as_str)
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let k = request.key;
        self.lookup(k.agent, k.mode, k.iteration)
            .map(str::to_string)
            .ok_or_else(|| {
                LlmError::Transport(format!(
                    "transcript has no {} response for mode {} at iteration {}",
                    k.agent, k.mode, k.iteration
                ))
            })
    }
}

//! The chat-completion contract shared by the remote and mock backends.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::LoopMode;

use super::prompt::Message;
use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Analysis,
    Generation,
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::Analysis => "analysis",
            AgentRole::Generation => "generation",
        })
    }
}

/// Identifies one agent call within a campaign. The mock backend replays by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExchangeKey {
    pub agent: AgentRole,
    pub mode: LoopMode,
    pub iteration: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub key: ExchangeKey,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

pub trait ChatBackend {
    fn id(&self) -> String;

    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// One prompt/response pair, logged verbatim with the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub agent: AgentRole,
    pub prompt: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub response: String,
    pub backend_id: String,
}

/// A backend together with the sampling settings of one agent.
pub struct Agent {
    pub role: AgentRole,
    pub backend: Box<dyn ChatBackend>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Agent {
    pub fn new(role: AgentRole, backend: Box<dyn ChatBackend>, temperature: f64, max_tokens: u32) -> Self {
        Self {
            role,
            backend,
            temperature,
            max_tokens,
        }
    }

    pub fn ask(
        &mut self,
        mode: LoopMode,
        iteration: u64,
        messages: Vec<Message>,
    ) -> Result<ChatExchange, LlmError> {
        let request = ChatRequest {
            key: ExchangeKey {
                agent: self.role,
                mode,
                iteration,
            },
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let response = self.backend.complete(&request)?;
        Ok(ChatExchange {
            agent: self.role,
            prompt: request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            response,
            backend_id: self.backend.id(),
        })
    }
}

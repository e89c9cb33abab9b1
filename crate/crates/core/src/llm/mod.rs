//! The two language-model agents.
//!
//! The generation agent writes model-level tests, either from a default
//! few-shot prompt or from a feedback-guided prompt. The analysis agent turns
//! raw feedback (coverage, bug report or exception log) into a short summary
//! with an explanation, reasons and a next testing strategy.

mod backend;
mod mock;
mod parse;
mod profile;
mod prompt;
mod remote;

use thiserror::Error;

pub use backend::{Agent, AgentRole, ChatBackend, ChatExchange, ChatRequest, ExchangeKey};
pub use mock::{MockBackend, Transcript, TranscriptEntry};
pub use parse::{parse_code, parse_summary, AnalysisSummary};
pub use profile::{AnalysisExample, BackendLabels, FewShotExample, SutProfile};
pub use prompt::{
    build_analysis_prompt, build_default_prompt, build_feedback_prompt, leftover_placeholders,
    render_summary, truncate_middle, Message, Prompt, PromptBudget, Role, Strategy, PLACEHOLDERS,
};
pub use remote::{RemoteBackend, RemoteSettings};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("could not parse generated code: {0}")]
    GenerationParse(String),
    #[error("could not parse analysis summary: {0}")]
    AnalysisParse(String),
    #[error("LLM request failed: {0}")]
    Transport(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("transcript: {0}")]
    Transcript(String),
}

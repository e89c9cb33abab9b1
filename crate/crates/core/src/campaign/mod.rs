//! The fuzzing loop.
//!
//! Each iteration picks a prompt mode from how the previous one ended, selects
//! operators, asks the analysis agent to digest the previous feedback (outside
//! default mode), asks the generation agent for a test, runs it on both
//! backends and classifies the pair. The record is appended to the log and
//! folded into [`CampaignState`]; a campaign is resumed by folding the log
//! again.

mod mode;
mod record;
mod runner;
mod state;
mod store;
mod summary;

use std::path::PathBuf;

use thiserror::Error;

use crate::bridge::BridgeError;
use crate::config::ConfigError;
use crate::llm::LlmError;
use crate::opsel::OpselError;

pub use mode::{next_mode, next_mode_windowed, StepResult};
pub use record::{FailureStage, IterationFailure, IterationRecord};
pub use runner::{
    executor_from_config, render_coverage_feedback, run_iteration, Campaign, Clock, Deps, FrozenClock, LoopSettings,
    SystemClock,
};
pub use state::{Applied, CampaignState, Tallies};
pub use store::{
    load_campaign, CampaignStore, LoadedCampaign, BUG_DIR, CONFIG_SNAPSHOT, COVERAGE_FILE,
    LOG_DIR, OPERATORS_SNAPSHOT, STATE_SNAPSHOT,
};
pub use summary::CampaignSummary;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("record id {found} does not follow iteration {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("corrupt campaign: {0}")]
    Corrupt(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("{0} does not hold a campaign")]
    NotACampaign(PathBuf),
    #[error("no record with id {0}")]
    MissingRecord(u64),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Opsel(#[from] OpselError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::oracle::Classification;
use crate::types::LoopMode;

/// How an iteration ended, as far as mode selection cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepResult {
    Pass,
    Bug,
    Invalid,
    /// Analysis, generation, parsing or execution failed; no classification.
    Failure,
}

impl From<Classification> for StepResult {
    fn from(c: Classification) -> Self {
        match c {
            Classification::Pass => StepResult::Pass,
            Classification::BugNumerical | Classification::BugBehavioral => StepResult::Bug,
            Classification::Invalid => StepResult::Invalid,
        }
    }
}

impl fmt::Display for StepResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepResult::Pass => "pass",
            StepResult::Bug => "bug",
            StepResult::Invalid => "invalid",
            StepResult::Failure => "failure",
        })
    }
}

/// Prompt mode of the next iteration, allowing one repair attempt per
/// invalid test.
///
/// ```
/// use dlfuzz::campaign::{next_mode, StepResult};
/// use dlfuzz::types::LoopMode;
///
/// assert_eq!(next_mode(LoopMode::FeedbackGuided, StepResult::Invalid, 7), LoopMode::Repair);
/// assert_eq!(next_mode(LoopMode::Repair, StepResult::Invalid, 8), LoopMode::Default);
/// assert_eq!(next_mode(LoopMode::Repair, StepResult::Pass, 9), LoopMode::FeedbackGuided);
/// ```
pub fn next_mode(prev_mode: LoopMode, prev: StepResult, iteration: u64) -> LoopMode {
    let streak = u32::from(prev_mode == LoopMode::Repair);
    next_mode_windowed(prev_mode, prev, iteration, streak, 1)
}

/// [`next_mode`] with up to `window` consecutive repair attempts.
/// `repair_streak` counts the Repair iterations that directly precede this one.
pub fn next_mode_windowed(
    prev_mode: LoopMode,
    prev: StepResult,
    iteration: u64,
    repair_streak: u32,
    window: u32,
) -> LoopMode {
    if iteration == 0 {
        return LoopMode::Default;
    }
    // a streak is only meaningful while the previous iteration was a repair
    let streak = if prev_mode == LoopMode::Repair { repair_streak.max(1) } else { 0 };
    match prev {
        StepResult::Failure => LoopMode::Default,
        StepResult::Invalid if streak < window => LoopMode::Repair,
        StepResult::Invalid => LoopMode::Default,
        StepResult::Pass | StepResult::Bug => LoopMode::FeedbackGuided,
    }
}

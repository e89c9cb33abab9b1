use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageSet;
use crate::llm::{AnalysisSummary, ChatExchange};
use crate::opsel::StatUpdate;
use crate::oracle::{BackendResult, Classification, Outcome};
use crate::types::{FeedbackPayload, LoopMode, TestCase};

use super::mode::StepResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Analysis,
    Generation,
    Execution,
}

impl fmt::Display for FailureStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureStage::Analysis => "analysis",
            FailureStage::Generation => "generation",
            FailureStage::Execution => "execution",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub stage: FailureStage,
    pub message: String,
}

/// Everything one iteration did, as written to the log.
///
/// `summary` is the analysis this iteration consumed to build its prompt, so
/// it is present exactly when `mode` is not `Default` and analysis succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub id: u64,
    pub mode: LoopMode,
    pub selected_ops: Vec<String>,
    /// Stats charged to the previous iteration's operators before selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat_update: Option<StatUpdate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<AnalysisSummary>,
    #[serde(default)]
    pub exchanges: Vec<ChatExchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestCase>,
    /// Seed sent with the execution request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eager: Option<BackendResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiled: Option<BackendResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<IterationFailure>,
    /// Feedback handed to the next iteration. Equals `outcome.feedback` when
    /// the test was classified.
    pub feedback: FeedbackPayload,
    /// Lines covered by a passing test; absent otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covered: Option<CoverageSet>,
    pub delta_cov: u64,
    pub wall_time_ms: u64,
}

impl IterationRecord {
    pub fn result(&self) -> StepResult {
        match &self.outcome {
            Some(o) => o.classification.into(),
            None => StepResult::Failure,
        }
    }

    pub fn classification(&self) -> Option<Classification> {
        self.outcome.as_ref().map(|o| o.classification)
    }

    pub fn signature(&self) -> Option<&str> {
        self.outcome.as_ref().and_then(|o| o.signature.as_deref())
    }

    /// A repair attempt that produced something other than an invalid test.
    pub fn repair_succeeded(&self) -> bool {
        self.mode == LoopMode::Repair
            && matches!(self.classification(), Some(c) if c != Classification::Invalid)
    }
}

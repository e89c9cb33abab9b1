//! Domain types shared by every stage of a campaign.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// One operator of the system under test plus its feedback counters.
///
/// The counters only ever grow during a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    /// Number of completed iterations that used this operator.
    pub used_times: u64,
    /// Number of those iterations that ended in an exception on both backends.
    pub exp_count: u64,
    /// Newly covered lines attributed to this operator, summed over iterations.
    pub cov_count: u64,
}

impl OperatorRecord {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            signature: None,
            used_times: 0,
            exp_count: 0,
            cov_count: 0,
        }
    }

    pub fn with_signature(mut self, signature: impl Into<String>) -> Self {
        self.signature = Some(signature.into());
        self
    }
}

/// Operator statistics keyed by operator name.
pub type OperatorTable = BTreeMap<String, OperatorRecord>;

/// How the generation prompt of an iteration was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    Default,
    FeedbackGuided,
    Repair,
}

impl LoopMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopMode::Default => "default",
            LoopMode::FeedbackGuided => "feedback_guided",
            LoopMode::Repair => "repair",
        }
    }
}

impl fmt::Display for LoopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model-level test: a model definition plus the construction of its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: u64,
    pub source: String,
    pub selected_ops: Vec<String>,
    pub origin: LoopMode,
}

/// The three mutually exclusive feedback categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Coverage,
    BugReport,
    ExceptionLog,
}

/// Feedback produced by one iteration, rendered for the analysis prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPayload {
    pub kind: FeedbackKind,
    pub body: String,
    /// Newly covered lines. Always zero unless `kind` is `Coverage`.
    pub delta_cov: u64,
}

impl FeedbackPayload {
    pub fn coverage(body: impl Into<String>, delta_cov: u64) -> Self {
        Self {
            kind: FeedbackKind::Coverage,
            body: body.into(),
            delta_cov,
        }
    }

    pub fn bug_report(body: impl Into<String>) -> Self {
        Self {
            kind: FeedbackKind::BugReport,
            body: body.into(),
            delta_cov: 0,
        }
    }

    pub fn exception_log(body: impl Into<String>) -> Self {
        Self {
            kind: FeedbackKind::ExceptionLog,
            body: body.into(),
            delta_cov: 0,
        }
    }
}

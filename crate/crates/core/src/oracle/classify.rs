//! Three-way classification of a pair of backend results.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::types::{FeedbackKind, FeedbackPayload};

use super::compare::{elementwise_consistent, StructureMismatch, ToleranceConfig, Violation};
use super::tensor::TensorValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Eager,
    Compiled,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Eager => "eager",
            BackendKind::Compiled => "compiled",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An exception raised while building or running the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionInfo {
    #[serde(rename = "type")]
    pub type_name: String,
    pub message: String,
    /// Stack frames, outermost first, already restricted to the framework.
    #[serde(default)]
    pub trace: Vec<String>,
}

impl ExceptionInfo {
    pub fn new(type_name: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            type_name: type_name.into(),
            message: message.into(),
            trace: Vec::new(),
        }
    }

    /// The frame closest to the raise site.
    pub fn top_frame(&self) -> Option<&str> {
        self.trace.last().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecStatus {
    Ok { outputs: Vec<TensorValue> },
    Exception { exception: ExceptionInfo },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResult {
    pub backend: BackendKind,
    #[serde(flatten)]
    pub status: ExecStatus,
}

impl BackendResult {
    pub fn ok(backend: BackendKind, outputs: Vec<TensorValue>) -> Self {
        Self {
            backend,
            status: ExecStatus::Ok { outputs },
        }
    }

    pub fn exception(backend: BackendKind, exception: ExceptionInfo) -> Self {
        Self {
            backend,
            status: ExecStatus::Exception { exception },
        }
    }

    pub fn timeout(backend: BackendKind) -> Self {
        Self {
            backend,
            status: ExecStatus::Timeout,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.status, ExecStatus::Ok { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Pass,
    BugNumerical,
    BugBehavioral,
    Invalid,
}

impl Classification {
    pub fn is_bug(self) -> bool {
        matches!(self, Classification::BugNumerical | Classification::BugBehavioral)
    }

    pub fn feedback_kind(self) -> FeedbackKind {
        match self {
            Classification::Pass => FeedbackKind::Coverage,
            Classification::BugNumerical | Classification::BugBehavioral => FeedbackKind::BugReport,
            Classification::Invalid => FeedbackKind::ExceptionLog,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Pass => "pass",
            Classification::BugNumerical => "bug_numerical",
            Classification::BugBehavioral => "bug_behavioral",
            Classification::Invalid => "invalid",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What made a bug a bug; the input to signature hashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BugEvidence {
    Behavioral {
        failing: BackendKind,
        error_type: String,
        top_frame: Option<String>,
    },
    Numerical {
        /// Index of the first inconsistent output, `None` for an output-count mismatch.
        output: Option<usize>,
        violation: Violation,
    },
}

impl BugEvidence {
    pub fn is_structural(&self) -> bool {
        match self {
            BugEvidence::Numerical { violation, .. } => violation.is_structural(),
            BugEvidence::Behavioral { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub classification: Classification,
    pub feedback: FeedbackPayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<BugEvidence>,
}

impl Outcome {
    /// Replace the feedback of a passing outcome with rendered coverage feedback.
    pub fn attach_coverage(&mut self, body: String, delta_cov: u64) {
        debug_assert_eq!(self.classification, Classification::Pass);
        self.feedback = FeedbackPayload::coverage(body, delta_cov);
    }
}

/// Classify an eager/compiled result pair.
///
/// | eager     | compiled  | result                                   |
/// |-----------|-----------|------------------------------------------|
/// | failed    | failed    | `Invalid`                                |
/// | ok        | failed    | `BugBehavioral`                          |
/// | failed    | ok        | `BugBehavioral`                          |
/// | ok        | ok        | `BugNumerical` if any output disagrees, else `Pass` |
///
/// "Failed" is an exception or a timeout.
pub fn classify(eager: &BackendResult, compiled: &BackendResult, tol: &ToleranceConfig) -> Outcome {
    match (&eager.status, &compiled.status) {
        (ExecStatus::Ok { outputs: a }, ExecStatus::Ok { outputs: b }) => compare_outputs(a, b, tol),
        (ExecStatus::Ok { .. }, _) => behavioral(eager, compiled, BackendKind::Compiled),
        (_, ExecStatus::Ok { .. }) => behavioral(eager, compiled, BackendKind::Eager),
        _ => Outcome {
            classification: Classification::Invalid,
            feedback: FeedbackPayload::exception_log(format!(
                "{}\n{}",
                describe_failure(eager),
                describe_failure(compiled)
            )),
            signature: None,
            evidence: None,
        },
    }
}

fn compare_outputs(eager: &[TensorValue], compiled: &[TensorValue], tol: &ToleranceConfig) -> Outcome {
    let found = if eager.len() != compiled.len() {
        Some((
            None,
            Violation::Structure {
                mismatch: StructureMismatch::OutputCount {
                    eager: eager.len(),
                    compiled: compiled.len(),
                },
            },
        ))
    } else {
        eager
            .iter()
            .zip(compiled)
            .enumerate()
            .find_map(|(i, (a, b))| elementwise_consistent(a, b, tol).map(|v| (Some(i), v)))
    };
    match found {
        None => Outcome {
            classification: Classification::Pass,
            feedback: FeedbackPayload::coverage(
                "Both backends ran and their outputs agree within tolerance.",
                0,
            ),
            signature: None,
            evidence: None,
        },
        Some((output, violation)) => {
            let body = render_numerical(output, &violation, tol);
            Outcome {
                classification: Classification::BugNumerical,
                feedback: FeedbackPayload::bug_report(body),
                signature: None,
                evidence: Some(BugEvidence::Numerical { output, violation }),
            }
        }
    }
}

fn behavioral(eager: &BackendResult, compiled: &BackendResult, failing: BackendKind) -> Outcome {
    let failed = if failing == BackendKind::Eager { eager } else { compiled };
    let (error_type, top_frame) = match &failed.status {
        ExecStatus::Exception { exception } => (
            exception.type_name.clone(),
            exception.top_frame().map(str::to_string),
        ),
        _ => ("Timeout".to_string(), None),
    };
    let passing = if failing == BackendKind::Eager {
        BackendKind::Compiled
    } else {
        BackendKind::Eager
    };
    let body = format!(
        "Behavior inconsistency: the {passing} backend ran successfully but the {failing} backend failed.\n{}",
        describe_failure(failed)
    );
    Outcome {
        classification: Classification::BugBehavioral,
        feedback: FeedbackPayload::bug_report(body),
        signature: None,
        evidence: Some(BugEvidence::Behavioral {
            failing,
            error_type,
            top_frame,
        }),
    }
}

fn describe_failure(result: &BackendResult) -> String {
    match &result.status {
        ExecStatus::Exception { exception } => {
            let mut s = format!(
                "{} backend raised {}: {}",
                result.backend, exception.type_name, exception.message
            );
            if !exception.trace.is_empty() {
                s.push_str("\nTraceback (outermost first):");
                for frame in &exception.trace {
                    let _ = write!(s, "\n  {frame}");
                }
            }
            s
        }
        ExecStatus::Timeout => format!("{} backend timed out", result.backend),
        ExecStatus::Ok { outputs } => format!("{} backend returned {} output(s)", result.backend, outputs.len()),
    }
}

fn render_numerical(output: Option<usize>, violation: &Violation, tol: &ToleranceConfig) -> String {
    let mut s = String::from("Numerical inconsistency between eager and compiled outputs");
    match violation {
        Violation::Element {
            index,
            eager,
            compiled,
        } => {
            let _ = write!(
                s,
                " in output {}: first violation at flat index {index}, eager={eager:?}, compiled={compiled:?}, |diff|={:?} exceeds atol={} + rtol={} * |compiled|.",
                output.unwrap_or(0),
                (eager - compiled).abs(),
                tol.atol,
                tol.rtol
            );
        }
        Violation::Structure { mismatch } => {
            let _ = write!(s, ": structure mismatch");
            if let Some(i) = output {
                let _ = write!(s, " in output {i}");
            }
            let _ = match mismatch {
                StructureMismatch::Shape { eager, compiled } => {
                    write!(s, ", shape {eager:?} vs {compiled:?}.")
                }
                StructureMismatch::Dtype { eager, compiled } => {
                    write!(s, ", dtype {eager} vs {compiled}.")
                }
                StructureMismatch::OutputCount { eager, compiled } => {
                    write!(s, ", {eager} eager outputs vs {compiled} compiled outputs.")
                }
                StructureMismatch::Digest => write!(s, ", content digests differ."),
            };
        }
    }
    s
}

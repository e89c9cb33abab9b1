//! Differential oracle for eager versus compiled execution.
//!
//! Two oracles decide whether a pair of executions exposes a bug:
//!
//! * numerical: every output element must satisfy
//!   `|eager_i - compiled_i| <= atol + rtol * |compiled_i|`;
//! * behavioral: either both backends fail or neither does.
//!
//! A pair that crashes on both sides is an invalid test, not a bug.

mod classify;
mod compare;
mod signature;
mod tensor;

use thiserror::Error;

pub use classify::{
    classify, BackendKind, BackendResult, BugEvidence, Classification, ExceptionInfo, ExecStatus,
    Outcome,
};
pub use compare::{
    elements_close, elementwise_consistent, StructureMismatch, ToleranceConfig, Violation,
};
pub use signature::bug_signature;
pub use tensor::{TensorDigest, TensorPayload, TensorValue};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("tensor of shape {shape:?} carries {len} elements")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
}

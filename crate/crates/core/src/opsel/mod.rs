//! Feedback-aware operator selection.
//!
//! Every operator carries three counters (uses, exceptions, newly covered
//! lines). Before each fresh selection the operators of the previous iteration
//! are charged with that iteration's feedback, then a simulated-annealing
//! search picks a sequence of 1..=3 distinct operators whose mean value is
//! high. When the previous test crashed on both backends the previous
//! sequence is handed back untouched so the test can be repaired.

mod anneal;
mod opset;
mod value;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::OperatorTable;

pub use anneal::{
    metropolis_accept, simulated_annealing, simulated_annealing_traced, AnnealTrace,
    OperatorSequence, SAParams,
};
pub use opset::{load_operator_set, parse_operator_set};
pub use value::{fitness, op_value, record_value};

#[derive(Debug, Error)]
pub enum OpselError {
    #[error("operator `{0}` is not in the operator table")]
    UnknownOperator(String),
    #[error("operator sequence is empty")]
    EmptySequence,
    #[error("operator set has {available} operators but at least {required} are required")]
    TooFewOperators { available: usize, required: usize },
    #[error("invalid annealing parameters: {0}")]
    InvalidParams(String),
    #[error("repair requested but there is no previous operator sequence")]
    NothingToRepair,
    #[error("operator set: {0}")]
    OperatorSet(String),
}

/// Feedback charged to the operators of one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatUpdate {
    pub ops: Vec<String>,
    pub delta_cov: u64,
    pub exception: bool,
}

impl StatUpdate {
    pub fn apply(&self, table: &mut OperatorTable) -> Result<(), OpselError> {
        update_stats(table, &self.ops, self.delta_cov, self.exception)
    }
}

/// Charge every operator in `last_ops` with one use, the exception flag, and
/// the full coverage delta.
pub fn update_stats(
    table: &mut OperatorTable,
    last_ops: &[String],
    delta_cov: u64,
    exception_occurred: bool,
) -> Result<(), OpselError> {
    if let Some(missing) = last_ops.iter().find(|op| !table.contains_key(*op)) {
        return Err(OpselError::UnknownOperator(missing.clone()));
    }
    for op in last_ops {
        let record = table.get_mut(op).expect("checked above");
        record.used_times += 1;
        record.exp_count += u64::from(exception_occurred);
        record.cov_count += delta_cov;
    }
    Ok(())
}

/// What the previous iteration reported to the selector.
#[derive(Debug, Clone, Copy)]
pub struct PreviousFeedback<'a> {
    pub delta_cov: u64,
    pub exception_occurred: bool,
    /// The current iteration is a repair of the previous test.
    pub repair_pending: bool,
    pub last_ops: &'a [String],
}

impl<'a> PreviousFeedback<'a> {
    pub fn first_iteration() -> Self {
        Self {
            delta_cov: 0,
            exception_occurred: false,
            repair_pending: false,
            last_ops: &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub ops: OperatorSequence,
    /// The stat update that was applied before searching, if any.
    pub applied: Option<StatUpdate>,
}

/// One selection step: early return for repair, else charge the previous
/// operators and anneal a new sequence.
pub fn ops_selection<R: Rng + ?Sized>(
    previous: PreviousFeedback<'_>,
    table: &mut OperatorTable,
    params: &SAParams,
    rng: &mut R,
) -> Result<Selection, OpselError> {
    if previous.repair_pending {
        if previous.last_ops.is_empty() {
            return Err(OpselError::NothingToRepair);
        }
        return Ok(Selection {
            ops: OperatorSequence(previous.last_ops.to_vec()),
            applied: None,
        });
    }
    if table.is_empty() {
        return Err(OpselError::TooFewOperators {
            available: 0,
            required: params.k_min.max(1),
        });
    }
    let applied = if previous.last_ops.is_empty() {
        None
    } else {
        let update = StatUpdate {
            ops: previous.last_ops.to_vec(),
            delta_cov: previous.delta_cov,
            exception: previous.exception_occurred,
        };
        update.apply(table)?;
        Some(update)
    };
    let ops = simulated_annealing(table, params, rng)?;
    Ok(Selection { ops, applied })
}

//! Operator valuation and sequence fitness.

use crate::types::{OperatorRecord, OperatorTable};

use super::OpselError;

/// Value of an operator used `uses` times, charged `exceptions` exceptions and
/// credited with `new_lines` newly covered lines:
///
/// `alpha / (alpha + uses) + alpha * e^(-exceptions) + beta - e^(-new_lines / 100)`
///
/// With every counter at zero the value is `alpha + beta`. The function is
/// strictly decreasing in `uses` and `exceptions` and strictly increasing in
/// `new_lines`, up to the resolution of `f64`.
pub fn op_value(uses: u64, exceptions: u64, new_lines: u64, alpha: f64, beta: f64) -> f64 {
    let x = uses as f64;
    let y = exceptions as f64;
    let z = new_lines as f64;
    (alpha / (alpha + x) + alpha / y.exp()) + (beta - (-z / 100.0).exp())
}

pub fn record_value(record: &OperatorRecord, alpha: f64, beta: f64) -> f64 {
    op_value(record.used_times, record.exp_count, record.cov_count, alpha, beta)
}

/// Mean value of the named operators.
pub fn fitness<S: AsRef<str>>(
    seq: &[S],
    table: &OperatorTable,
    alpha: f64,
    beta: f64,
) -> Result<f64, OpselError> {
    if seq.is_empty() {
        return Err(OpselError::EmptySequence);
    }
    let mut total = 0.0;
    for name in seq {
        let name = name.as_ref();
        let record = table
            .get(name)
            .ok_or_else(|| OpselError::UnknownOperator(name.to_string()))?;
        total += record_value(record, alpha, beta);
    }
    Ok(total / seq.len() as f64)
}

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageSet;
use crate::opsel::PreviousFeedback;
use crate::oracle::Classification;
use crate::types::{FeedbackPayload, LoopMode, OperatorTable, TestCase};

use super::mode::{next_mode_windowed, StepResult};
use super::record::IterationRecord;
use super::CampaignError;

/// Running counts over the log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub pass: u64,
    pub bug_numerical: u64,
    pub bug_behavioral: u64,
    pub invalid: u64,
    pub failures: u64,
    pub unique_numerical: u64,
    pub unique_behavioral: u64,
    pub repairs_attempted: u64,
    pub repairs_succeeded: u64,
    /// Summed iteration wall time.
    pub elapsed_ms: u64,
}

impl Tallies {
    pub fn executed(&self) -> u64 {
        self.pass + self.bug_numerical + self.bug_behavioral + self.invalid
    }

    pub fn valid(&self) -> u64 {
        self.pass + self.bug_numerical + self.bug_behavioral
    }
}

/// The resumable unit: everything the next iteration depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub cumulative_cov: CoverageSet,
    pub op_table: OperatorTable,
    /// Number of records in the log, and the id of the next one.
    pub iteration: u64,
    pub last_ops: Vec<String>,
    pub last_mode: Option<LoopMode>,
    pub last_result: Option<StepResult>,
    pub last_delta_cov: u64,
    pub last_test: Option<TestCase>,
    pub last_feedback: Option<FeedbackPayload>,
    /// Repair iterations directly preceding the next one.
    pub repair_streak: u32,
    pub rng_seed: u64,
    pub bug_signatures: BTreeSet<String>,
    pub tallies: Tallies,
}

/// What folding one record changed, beyond the state itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Applied {
    pub new_signature: Option<String>,
}

impl CampaignState {
    pub fn new(op_table: OperatorTable, rng_seed: u64) -> Self {
        Self {
            cumulative_cov: CoverageSet::new(),
            op_table,
            iteration: 0,
            last_ops: Vec::new(),
            last_mode: None,
            last_result: None,
            last_delta_cov: 0,
            last_test: None,
            last_feedback: None,
            repair_streak: 0,
            rng_seed,
            bug_signatures: BTreeSet::new(),
            tallies: Tallies::default(),
        }
    }

    pub fn next_mode(&self, window: u32) -> LoopMode {
        match (self.last_mode, self.last_result) {
            (Some(mode), Some(result)) => {
                next_mode_windowed(mode, result, self.iteration, self.repair_streak, window)
            }
            _ => LoopMode::Default,
        }
    }

    /// Generator for one iteration: the campaign seed, on a stream chosen by
    /// the iteration number. Nothing about it needs persisting.
    pub fn rng_for(&self, iteration: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(iteration);
        rng
    }

    /// Feedback for operator selection in an iteration running in `mode`.
    pub fn previous_feedback(&self, mode: LoopMode) -> PreviousFeedback<'_> {
        PreviousFeedback {
            delta_cov: self.last_delta_cov,
            exception_occurred: self.last_result == Some(StepResult::Invalid),
            repair_pending: mode == LoopMode::Repair,
            last_ops: &self.last_ops,
        }
    }

    /// Fold one record into the state. Fails, leaving the state untouched,
    /// when the record does not fit.
    pub fn apply(&mut self, record: &IterationRecord) -> Result<Applied, CampaignError> {
        let mut next = self.clone();
        let applied = next.apply_in_place(record)?;
        *self = next;
        Ok(applied)
    }

    fn apply_in_place(&mut self, record: &IterationRecord) -> Result<Applied, CampaignError> {
        let corrupt = |m: String| Err(CampaignError::Corrupt(format!("record {}: {m}", record.id)));
        if record.id != self.iteration {
            return Err(CampaignError::IdMismatch {
                expected: self.iteration,
                found: record.id,
            });
        }
        if let Some(update) = &record.stat_update {
            update
                .apply(&mut self.op_table)
                .map_err(|e| CampaignError::Corrupt(format!("record {}: {e}", record.id)))?;
        }
        let delta = match &record.covered {
            Some(covered) => self.cumulative_cov.union_with(covered) as u64,
            None => 0,
        };
        if delta != record.delta_cov || record.feedback.delta_cov != record.delta_cov {
            return corrupt(format!(
                "delta_cov {} does not match the {delta} new lines it covers",
                record.delta_cov
            ));
        }

        let t = &mut self.tallies;
        let mut applied = Applied::default();
        match record.classification() {
            Some(Classification::Pass) => t.pass += 1,
            Some(Classification::BugNumerical) => t.bug_numerical += 1,
            Some(Classification::BugBehavioral) => t.bug_behavioral += 1,
            Some(Classification::Invalid) => t.invalid += 1,
            None => t.failures += 1,
        }
        if let Some(sig) = record.signature() {
            if self.bug_signatures.insert(sig.to_string()) {
                match record.classification() {
                    Some(Classification::BugNumerical) => t.unique_numerical += 1,
                    _ => t.unique_behavioral += 1,
                }
                applied.new_signature = Some(sig.to_string());
            }
        }
        if record.mode == LoopMode::Repair {
            t.repairs_attempted += 1;
            t.repairs_succeeded += u64::from(record.repair_succeeded());
        }
        t.elapsed_ms += record.wall_time_ms;

        self.iteration += 1;
        self.last_ops = record.selected_ops.clone();
        self.last_mode = Some(record.mode);
        self.last_result = Some(record.result());
        self.last_delta_cov = record.delta_cov;
        self.last_test = record.test.clone();
        self.last_feedback = Some(record.feedback.clone());
        self.repair_streak = if record.mode == LoopMode::Repair {
            self.repair_streak + 1
        } else {
            0
        };
        Ok(applied)
    }
}

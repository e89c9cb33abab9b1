use std::fmt;

use serde::{Deserialize, Serialize};

use super::state::CampaignState;

/// End-of-campaign figures: bugs, coverage, valid tests and tests, plus the
/// repair accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub iterations: u64,
    /// Iterations whose test was executed and classified.
    pub tests: u64,
    /// Executed tests that did not crash on both backends.
    pub valid: u64,
    pub validity_rate: f64,
    pub unique_bugs: u64,
    pub unique_numerical: u64,
    pub unique_behavioral: u64,
    pub bug_outcomes: u64,
    pub invalid: u64,
    pub failures: u64,
    pub coverage: u64,
    pub repairs_attempted: u64,
    pub repairs_succeeded: u64,
}

impl CampaignSummary {
    pub fn from_state(state: &CampaignState) -> Self {
        let t = &state.tallies;
        let tests = t.executed();
        let valid = t.valid();
        Self {
            iterations: state.iteration,
            tests,
            valid,
            validity_rate: if tests == 0 { 0.0 } else { valid as f64 / tests as f64 },
            unique_bugs: state.bug_signatures.len() as u64,
            unique_numerical: t.unique_numerical,
            unique_behavioral: t.unique_behavioral,
            bug_outcomes: t.bug_numerical + t.bug_behavioral,
            invalid: t.invalid,
            failures: t.failures,
            coverage: state.cumulative_cov.len() as u64,
            repairs_attempted: t.repairs_attempted,
            repairs_succeeded: t.repairs_succeeded,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

impl fmt::Display for CampaignSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>10} {:>20} {:>8}", "# Bugs", "Coverage", "# Valid Tests (%)", "# Tests")?;
        writeln!(
            f,
            "{:>8} {:>10} {:>20} {:>8}",
            self.unique_bugs,
            self.coverage,
            format!("{} ({:.2}%)", self.valid, 100.0 * self.validity_rate),
            self.tests
        )?;
        write!(
            f,
            "iterations {}, failures {}, repairs {}/{} succeeded",
            self.iterations, self.failures, self.repairs_succeeded, self.repairs_attempted
        )
    }
}

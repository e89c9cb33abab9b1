//! Line-coverage sets.
//!
//! A line identifier is a `relative/file/path:line` string. The executor reports
//! the full covered set for every run; the orchestrator owns the cumulative set
//! and computes deltas against it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// A set of covered source lines. Ordered, so serialization is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageSet {
    lines: BTreeSet<String>,
}

impl CoverageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn contains(&self, line: &str) -> bool {
        self.lines.contains(line)
    }

    pub fn insert(&mut self, line: impl Into<String>) -> bool {
        self.lines.insert(line.into())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().map(String::as_str)
    }

    /// Lines in `self` that are not in `other`, in sorted order.
    pub fn difference<'a>(&'a self, other: &'a CoverageSet) -> impl Iterator<Item = &'a str> {
        self.lines.difference(&other.lines).map(String::as_str)
    }

    pub fn intersection_len(&self, other: &CoverageSet) -> usize {
        self.lines.intersection(&other.lines).count()
    }

    /// In-place union; returns how many lines were new.
    pub fn union_with(&mut self, other: &CoverageSet) -> usize {
        let before = self.lines.len();
        self.lines.extend(other.lines.iter().cloned());
        self.lines.len() - before
    }

    /// Renders one identifier per line, sorted, newline-terminated.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

impl<S: Into<String>> FromIterator<S> for CoverageSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            lines: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// Number of lines in `current` not yet present in `cumulative`.
pub fn coverage_delta(current: &CoverageSet, cumulative: &CoverageSet) -> usize {
    current.difference(cumulative).count()
}

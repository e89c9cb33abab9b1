//! Turning agent replies into test sources and analysis summaries.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::profile::SutProfile;
use super::LlmError;

/// The analysis agent's distilled view of one iteration's feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub explanation: String,
    pub reasons: String,
    /// Never empty.
    pub next_strategy: String,
    pub raw: String,
}

impl AnalysisSummary {
    pub fn from_strategy(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            explanation: String::new(),
            reasons: String::new(),
            next_strategy: text.clone(),
            raw: text,
        }
    }
}

fn fence_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)\n?```").expect("fence regex"))
}

fn heading_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?im)^[ \t>#*_\-]*(?:\d+[.)]\s*)?(?:\*\*)?(explanation|reasons?|next\s+(?:testing\s+)?strategy)\b(?:\*\*)?[ \t]*:?(?:\*\*)?[ \t]*",
        )
        .expect("heading regex")
    })
}

/// Extract the test program from a generation reply.
///
/// Takes the first fenced code block, or the whole reply when there is none,
/// and requires every code marker of the profile to be present.
pub fn parse_code(response: &str, profile: &SutProfile) -> Result<String, LlmError> {
    let code = match fence_regex().captures(response) {
        Some(caps) => caps[1].to_string(),
        None => response.trim().to_string(),
    };
    if code.trim().is_empty() {
        return Err(LlmError::GenerationParse("reply contains no code".into()));
    }
    let missing: Vec<&str> = profile
        .code_markers
        .iter()
        .filter(|m| !code.contains(m.as_str()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(LlmError::GenerationParse(format!(
            "generated code lacks required markers: {}",
            missing.join(", ")
        )));
    }
    Ok(code)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Explanation,
    Reasons,
    Strategy,
}

/// Split an analysis reply into its three labeled sections.
///
/// Without a usable "next testing strategy" section the whole reply becomes
/// the strategy.
pub fn parse_summary(response: &str) -> Result<AnalysisSummary, LlmError> {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return Err(LlmError::AnalysisParse("empty analysis reply".into()));
    }
    let headings: Vec<(Section, usize, usize)> = heading_regex()
        .captures_iter(response)
        .map(|caps| {
            let whole = caps.get(0).expect("match");
            let label = caps[1].to_ascii_lowercase();
            let section = if label.starts_with("explanation") {
                Section::Explanation
            } else if label.starts_with("reason") {
                Section::Reasons
            } else {
                Section::Strategy
            };
            (section, whole.start(), whole.end())
        })
        .collect();

    let mut summary = AnalysisSummary {
        explanation: String::new(),
        reasons: String::new(),
        next_strategy: String::new(),
        raw: response.to_string(),
    };
    for (i, &(section, _, body_start)) in headings.iter().enumerate() {
        let body_end = headings.get(i + 1).map_or(response.len(), |h| h.1);
        let body = response[body_start..body_end].trim().to_string();
        let slot = match section {
            Section::Explanation => &mut summary.explanation,
            Section::Reasons => &mut summary.reasons,
            Section::Strategy => &mut summary.next_strategy,
        };
        if slot.is_empty() {
            *slot = body;
        }
    }
    if summary.next_strategy.is_empty() {
        summary.next_strategy = trimmed.to_string();
    }
    Ok(summary)
}

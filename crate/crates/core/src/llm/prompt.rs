//! Prompt construction for the generation and analysis agents.
//!
//! Templates carry bracketed placeholders that are filled in a single pass, so
//! text substituted into one slot is never scanned for further placeholders.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::{FeedbackKind, FeedbackPayload, TestCase};

use super::parse::AnalysisSummary;
use super::profile::SutProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

pub type Prompt = Vec<Message>;

/// Every placeholder a template may contain.
pub const PLACEHOLDERS: &[&str] = &[
    "[LIBRARY]",
    "[SELECTED_OPS]",
    "[INSTRUCTION]",
    "[MODEL CODE]",
    "[COVERAGE]",
    "[BUG]",
    "[EXCEPTION]",
    "[ANALYSIS SUMMARY]",
    "[LANG]",
];

const GENERATION_SYSTEM: &str = "You write [LIBRARY] programs that test the [LIBRARY] compiler. \
Every program defines a model and constructs its input tensors. \
Reply with the complete program in a single fenced code block.";

const DEFAULT_INSTRUCTION: &str = "Please generate a valid [LIBRARY] model with selected operators.";

const DEFAULT_TURN: &str = "Selected operators: [SELECTED_OPS]\n\n[INSTRUCTION]";

const ANALYSIS_SYSTEM: &str = "You analyse execution feedback from a fuzzer that runs [LIBRARY] \
models on an eager backend and on a compiler backend.";

const ANALYSIS_HEADER: &str = "Shown here is a [LIBRARY] model along with input tensors from the last iteration.\n\n\
```[LANG]\n[MODEL CODE]\n```\n\n";

const ANALYSIS_COVERAGE: &str = "The model ran on both backends without any inconsistency. \
Coverage information:\n[COVERAGE]\n\n\
Analyse which framework code this model exercised and how the next model could reach code that is not covered yet.";

const ANALYSIS_BUG: &str = "The eager and compiled backends are inconsistent on this model. \
Bug report:\n[BUG]\n\n\
Analyse what triggers the inconsistency and how a related model could trigger similar bugs.";

const ANALYSIS_EXCEPTION: &str = "The model crashed on both backends, so it is invalid. \
Exception log:\n[EXCEPTION]\n\n\
Analyse why the model is invalid and how it can be repaired.";

const ANALYSIS_FOOTER: &str = "\n\nAnswer in three sections with exactly these headings:\n\
Explanation:\nReasons:\nNext testing strategy:";

const FEEDBACK_TURN: &str = "[INSTRUCTION]\n\n\
Model from the last iteration:\n```[LANG]\n[MODEL CODE]\n```\n\n\
Analysis summary:\n[ANALYSIS SUMMARY]\n\n\
Selected operators: [SELECTED_OPS]";

/// Which of the three feedback-guided strategies a prompt asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ExploreCoverage,
    TriggerSimilarBugs,
    RepairInvalid,
}

impl Strategy {
    pub fn for_feedback(kind: FeedbackKind) -> Self {
        match kind {
            FeedbackKind::Coverage => Strategy::ExploreCoverage,
            FeedbackKind::BugReport => Strategy::TriggerSimilarBugs,
            FeedbackKind::ExceptionLog => Strategy::RepairInvalid,
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            Strategy::ExploreCoverage => "Generate a new valid [LIBRARY] model that uses the selected operators \
and explores new coverage: exercise framework code the last model did not reach.",
            Strategy::TriggerSimilarBugs => "The last model exposed an inconsistency between the eager and the compiled backend. \
Generate a new [LIBRARY] model with the selected operators that is likely to trigger similar bugs.",
            Strategy::RepairInvalid => "The last model is invalid because it crashed on both backends. \
Repair the model so that it becomes a valid [LIBRARY] model with the selected operators.",
        }
    }
}

/// Character budget applied to feedback bodies in analysis prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptBudget {
    pub feedback_chars: usize,
    /// Newly covered lines listed in a coverage body.
    pub coverage_lines: usize,
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self {
            feedback_chars: 4000,
            coverage_lines: 200,
        }
    }
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alternation = PLACEHOLDERS
            .iter()
            .map(|p| regex::escape(p))
            .collect::<Vec<_>>()
            .join("|");
        Regex::new(&alternation).expect("placeholder regex")
    })
}

/// Substitute placeholders in one pass. Placeholders without a value are left alone.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    placeholder_regex()
        .replace_all(template, |caps: &regex::Captures<'_>| {
            let key = &caps[0];
            values
                .iter()
                .find(|(k, _)| *k == key)
                .map_or_else(|| key.to_string(), |(_, v)| v.to_string())
        })
        .into_owned()
}

/// Returns the placeholders still present in `text`.
pub fn leftover_placeholders(text: &str) -> Vec<&'static str> {
    PLACEHOLDERS.iter().copied().filter(|p| text.contains(p)).collect()
}

/// Shorten `text` to at most `budget` characters keeping its head and tail.
pub fn truncate_middle(text: &str, budget: usize) -> String {
    let total = text.chars().count();
    if total <= budget {
        return text.to_string();
    }
    // The marker length depends on the omitted count, which depends on the marker.
    let mut marker = String::new();
    for _ in 0..4 {
        let keep = budget.saturating_sub(marker.chars().count());
        marker = format!("\n... ({} characters omitted) ...\n", total - keep);
    }
    let keep = budget.saturating_sub(marker.chars().count());
    if keep == 0 {
        return text.chars().take(budget).collect();
    }
    let head = keep - keep / 2;
    let tail = keep / 2;
    let mut out: String = text.chars().take(head).collect();
    out.push_str(&marker);
    out.extend(text.chars().skip(total - tail));
    out
}

fn code_block(profile: &SutProfile, source: &str) -> String {
    format!("```{}\n{}\n```", profile.source_language, source.trim_end_matches('\n'))
}

/// Few-shot turns followed by the instruction for `selected_ops`; the model's
/// reply fills the open generation slot.
pub fn build_default_prompt(profile: &SutProfile, selected_ops: &[String]) -> Prompt {
    let library = profile.library_token.as_str();
    let mut prompt = vec![Message::system(fill(GENERATION_SYSTEM, &[("[LIBRARY]", library)]))];
    for example in &profile.few_shot_examples {
        let instruction = example.instruction.as_deref().unwrap_or(DEFAULT_INSTRUCTION);
        let instruction = fill(instruction, &[("[LIBRARY]", library)]);
        let ops = example.selected_ops.join(", ");
        prompt.push(Message::user(fill(
            DEFAULT_TURN,
            &[("[SELECTED_OPS]", &ops), ("[INSTRUCTION]", &instruction)],
        )));
        prompt.push(Message::assistant(code_block(profile, &example.source)));
    }
    let instruction = fill(DEFAULT_INSTRUCTION, &[("[LIBRARY]", library)]);
    let ops = selected_ops.join(", ");
    prompt.push(Message::user(fill(
        DEFAULT_TURN,
        &[("[SELECTED_OPS]", &ops), ("[INSTRUCTION]", &instruction)],
    )));
    prompt
}

fn analysis_turn(profile: &SutProfile, source: &str, kind: FeedbackKind, body: &str) -> String {
    let (branch, slot) = match kind {
        FeedbackKind::Coverage => (ANALYSIS_COVERAGE, "[COVERAGE]"),
        FeedbackKind::BugReport => (ANALYSIS_BUG, "[BUG]"),
        FeedbackKind::ExceptionLog => (ANALYSIS_EXCEPTION, "[EXCEPTION]"),
    };
    let template = format!("{ANALYSIS_HEADER}{branch}{ANALYSIS_FOOTER}");
    fill(
        &template,
        &[
            ("[LIBRARY]", &profile.library_token),
            ("[LANG]", &profile.source_language),
            ("[MODEL CODE]", source.trim_end_matches('\n')),
            (slot, body),
        ],
    )
}

/// Ask the analysis agent for an explanation, reasons and a next testing
/// strategy for the previous test's feedback.
pub fn build_analysis_prompt(
    profile: &SutProfile,
    last_test: &TestCase,
    feedback: &FeedbackPayload,
    budget: &PromptBudget,
) -> Prompt {
    let mut prompt = vec![Message::system(fill(
        ANALYSIS_SYSTEM,
        &[("[LIBRARY]", &profile.library_token)],
    ))];
    for example in &profile.analysis_examples {
        let body = truncate_middle(&example.feedback, budget.feedback_chars);
        prompt.push(Message::user(analysis_turn(
            profile,
            &example.source,
            example.feedback_kind,
            &body,
        )));
        prompt.push(Message::assistant(example.summary.clone()));
    }
    let body = truncate_middle(&feedback.body, budget.feedback_chars);
    prompt.push(Message::user(analysis_turn(
        profile,
        &last_test.source,
        feedback.kind,
        &body,
    )));
    prompt
}

/// Render a summary for the `[ANALYSIS SUMMARY]` slot.
pub fn render_summary(summary: &AnalysisSummary) -> String {
    let mut parts = Vec::new();
    if !summary.explanation.is_empty() {
        parts.push(format!("Explanation: {}", summary.explanation));
    }
    if !summary.reasons.is_empty() {
        parts.push(format!("Reasons: {}", summary.reasons));
    }
    parts.push(format!("Next testing strategy: {}", summary.next_strategy));
    parts.join("\n")
}

/// Generation prompt that combines the last test, the analysis summary and the
/// newly selected operators.
pub fn build_feedback_prompt(
    profile: &SutProfile,
    last_test: &TestCase,
    summary: &AnalysisSummary,
    strategy: Strategy,
    selected_ops: &[String],
) -> Prompt {
    let library = profile.library_token.as_str();
    let instruction = fill(strategy.instruction(), &[("[LIBRARY]", library)]);
    let ops = selected_ops.join(", ");
    let rendered = render_summary(summary);
    vec![
        Message::system(fill(GENERATION_SYSTEM, &[("[LIBRARY]", library)])),
        Message::user(fill(
            FEEDBACK_TURN,
            &[
                ("[INSTRUCTION]", &instruction),
                ("[LANG]", &profile.source_language),
                ("[MODEL CODE]", last_test.source.trim_end_matches('\n')),
                ("[ANALYSIS SUMMARY]", &rendered),
                ("[SELECTED_OPS]", &ops),
            ],
        )),
    ]
}

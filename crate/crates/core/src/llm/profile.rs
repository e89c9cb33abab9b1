//! Profiles of the framework under test and their few-shot examples.
//!
//! A profile directory holds `profile.toml` plus the example files it lists:
//!
//! ```toml
//! name = "toy"
//! library_token = "ToyTorch"
//! source_language = "python"
//! code_markers = ["class Model", "def make_inputs"]
//! few_shot_files = ["few_shot.toml"]
//!
//! [backend_labels]
//! eager = "eager interpreter"
//! compiled = "toy.compile"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::types::FeedbackKind;

use super::LlmError;

/// One example for the default generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    pub selected_ops: Vec<String>,
    /// Overrides the default instruction for this example.
    #[serde(default)]
    pub instruction: Option<String>,
    pub source: String,
}

/// A curated (program, feedback, summary) triple for the analysis prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisExample {
    pub feedback_kind: FeedbackKind,
    pub source: String,
    pub feedback: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendLabels {
    pub eager: String,
    pub compiled: String,
}

impl Default for BackendLabels {
    fn default() -> Self {
        Self {
            eager: "eager".into(),
            compiled: "compiled".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SutProfile {
    pub name: String,
    pub library_token: String,
    pub source_language: String,
    pub code_markers: Vec<String>,
    pub backend_labels: BackendLabels,
    pub few_shot_examples: Vec<FewShotExample>,
    pub analysis_examples: Vec<AnalysisExample>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    name: String,
    library_token: String,
    #[serde(default = "default_language")]
    source_language: String,
    code_markers: Vec<String>,
    #[serde(default)]
    backend_labels: BackendLabels,
    #[serde(default)]
    few_shot_files: Vec<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleFile {
    #[serde(default)]
    example: Vec<FewShotExample>,
    #[serde(default)]
    analysis_example: Vec<AnalysisExample>,
}

fn default_language() -> String {
    "python".into()
}

impl SutProfile {
    /// Load `profile.toml` (or the given file) and the example files it names,
    /// resolved relative to the profile file.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = if path.is_dir() {
            path.join("profile.toml")
        } else {
            path.to_path_buf()
        };
        let err = |msg: String| LlmError::Profile(format!("{}: {msg}", file.display()));
        let text = std::fs::read_to_string(&file).map_err(|e| err(e.to_string()))?;
        let parsed: ProfileFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        let base = file.parent().unwrap_or(Path::new("."));
        let mut profile = SutProfile {
            name: parsed.name,
            library_token: parsed.library_token,
            source_language: parsed.source_language,
            code_markers: parsed.code_markers,
            backend_labels: parsed.backend_labels,
            few_shot_examples: Vec::new(),
            analysis_examples: Vec::new(),
        };
        for rel in parsed.few_shot_files {
            let example_path = base.join(rel);
            let text = std::fs::read_to_string(&example_path)
                .map_err(|e| err(format!("{}: {e}", example_path.display())))?;
            let examples: ExampleFile = toml::from_str(&text)
                .map_err(|e| err(format!("{}: {e}", example_path.display())))?;
            profile.few_shot_examples.extend(examples.example);
            profile.analysis_examples.extend(examples.analysis_example);
        }
        profile.validate().map_err(|e| err(e.to_string()))?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.few_shot_examples.is_empty() {
            return Err(LlmError::Profile("profile needs at least one few-shot example".into()));
        }
        if self.code_markers.is_empty() || self.code_markers.iter().any(|m| m.is_empty()) {
            return Err(LlmError::Profile("profile needs nonempty code markers".into()));
        }
        Ok(())
    }
}

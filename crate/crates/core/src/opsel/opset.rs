//! Operator-set files.
//!
//! ```toml
//! [[operator]]
//! name = "torch.nn.Conv2d"
//! signature = "Conv2d(in_channels, out_channels, kernel_size, stride=1, padding=0)"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::types::{OperatorRecord, OperatorTable};

use super::OpselError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorSetFile {
    #[serde(default)]
    operator: Vec<OperatorEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorEntry {
    name: String,
    signature: Option<String>,
}

pub fn parse_operator_set(text: &str) -> Result<OperatorTable, OpselError> {
    let file: OperatorSetFile =
        toml::from_str(text).map_err(|e| OpselError::OperatorSet(e.to_string()))?;
    let mut table = OperatorTable::new();
    for entry in file.operator {
        let name = entry.name.trim().to_string();
        if name.is_empty() {
            return Err(OpselError::OperatorSet("operator with empty name".into()));
        }
        let mut record = OperatorRecord::new(name.clone());
        record.signature = entry.signature;
        if table.insert(name.clone(), record).is_some() {
            return Err(OpselError::OperatorSet(format!("duplicate operator `{name}`")));
        }
    }
    if table.is_empty() {
        return Err(OpselError::OperatorSet("operator set is empty".into()));
    }
    Ok(table)
}

pub fn load_operator_set(path: &Path) -> Result<OperatorTable, OpselError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OpselError::OperatorSet(format!("{}: {e}", path.display())))?;
    parse_operator_set(&text)
}

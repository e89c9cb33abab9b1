//! On-disk campaign layout.
//!
//! ```text
//! <workdir>/
//!   config.snapshot        resolved configuration (TOML)
//!   operators.snapshot     operator set the campaign started from (TOML)
//!   oplog/00000000.json    one record per iteration, one JSON line each
//!   state.snapshot         folded state (JSON), rewritten periodically
//!   coverage.cumulative    sorted covered lines, one per line
//!   bugs/<signature>.md    one report per unique bug
//! ```
//!
//! The log is the source of truth. Every file is written to a temporary name
//! and renamed into place, so a crash leaves either the old or the new file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::CampaignConfig;
use crate::opsel::parse_operator_set;
use crate::oracle::{BugEvidence, Classification};
use crate::types::OperatorTable;

use super::record::IterationRecord;
use super::state::CampaignState;
use super::CampaignError;

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const OPERATORS_SNAPSHOT: &str = "operators.snapshot";
pub const STATE_SNAPSHOT: &str = "state.snapshot";
pub const COVERAGE_FILE: &str = "coverage.cumulative";
pub const LOG_DIR: &str = "oplog";
pub const BUG_DIR: &str = "bugs";

#[derive(Debug, Clone)]
pub struct CampaignStore {
    root: PathBuf,
    snapshot_every: u64,
    replay_program: String,
}

/// A campaign read back from disk.
#[derive(Debug)]
pub struct LoadedCampaign {
    pub store: CampaignStore,
    pub config: CampaignConfig,
    pub state: CampaignState,
    /// Whether a torn final record was dropped.
    pub dropped_tail: bool,
}

fn storage(path: &Path, e: std::io::Error) -> CampaignError {
    CampaignError::Storage(format!("{}: {e}", path.display()))
}

/// Write `contents` next to `path` and rename it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CampaignError> {
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| storage(&tmp, e))?;
    file.write_all(contents).map_err(|e| storage(&tmp, e))?;
    file.sync_all().map_err(|e| storage(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| storage(path, e))
}

fn operators_toml(table: &OperatorTable) -> String {
    let mut out = String::new();
    for record in table.values() {
        out.push_str("[[operator]]\n");
        out.push_str(&format!("name = {}\n", toml_string(&record.name)));
        if let Some(sig) = &record.signature {
            out.push_str(&format!("signature = {}\n", toml_string(sig)));
        }
        out.push('\n');
    }
    out
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl CampaignStore {
    /// Lay out a new campaign in `root`, which must be absent or empty.
    pub fn create(
        root: &Path,
        config: &CampaignConfig,
        initial: &CampaignState,
    ) -> Result<Self, CampaignError> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(|e| storage(root, e))?;
            if entries.next().is_some() {
                return Err(CampaignError::Storage(format!(
                    "{} is not empty; use resume to continue a campaign",
                    root.display()
                )));
            }
        }
        for dir in [root.to_path_buf(), root.join(LOG_DIR), root.join(BUG_DIR)] {
            fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        }
        write_atomic(&root.join(CONFIG_SNAPSHOT), config.to_toml().as_bytes())?;
        write_atomic(
            &root.join(OPERATORS_SNAPSHOT),
            operators_toml(&initial.op_table).as_bytes(),
        )?;
        let store = Self::open(root, config);
        store.write_snapshots(initial)?;
        Ok(store)
    }

    fn open(root: &Path, config: &CampaignConfig) -> Self {
        Self {
            root: root.to_path_buf(),
            snapshot_every: config.loop_.snapshot_every.max(1),
            replay_program: "dlfuzz".into(),
        }
    }

    /// Program named in the reproduction command of bug reports.
    pub fn with_replay_program(mut self, program: impl Into<String>) -> Self {
        self.replay_program = program.into();
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_path(&self, id: u64) -> PathBuf {
        self.root.join(LOG_DIR).join(format!("{id:08}.json"))
    }

    pub fn bug_report_path(&self, signature: &str) -> PathBuf {
        self.root.join(BUG_DIR).join(format!("{signature}.md"))
    }

    /// Append `record` to the log and fold it into `state`. On any error the
    /// state is unchanged.
    pub fn persist_iteration(
        &self,
        state: &mut CampaignState,
        record: &IterationRecord,
    ) -> Result<(), CampaignError> {
        let mut next = state.clone();
        let applied = next.apply(record)?;
        let mut line = serde_json::to_vec(record).expect("records serialize");
        line.push(b'\n');
        write_atomic(&self.record_path(record.id), &line)?;
        *state = next;
        if state.iteration % self.snapshot_every == 0 {
            self.write_snapshots(state)?;
        } else {
            write_atomic(&self.root.join(COVERAGE_FILE), state.cumulative_cov.to_lines().as_bytes())?;
        }
        if let Some(sig) = applied.new_signature {
            let report = self.render_bug_report(&sig, record);
            write_atomic(&self.bug_report_path(&sig), report.as_bytes())?;
        }
        Ok(())
    }

    pub fn write_snapshots(&self, state: &CampaignState) -> Result<(), CampaignError> {
        let mut json = serde_json::to_vec_pretty(state).expect("state serializes");
        json.push(b'\n');
        write_atomic(&self.root.join(STATE_SNAPSHOT), &json)?;
        write_atomic(&self.root.join(COVERAGE_FILE), state.cumulative_cov.to_lines().as_bytes())
    }

    /// The command that replays `id` from this campaign.
    pub fn replay_command(&self, id: u64) -> String {
        format!(
            "{} replay --workdir {} --id {id}",
            shell_quote(&self.replay_program),
            shell_quote(&self.root.display().to_string())
        )
    }

    fn render_bug_report(&self, signature: &str, record: &IterationRecord) -> String {
        let outcome = record.outcome.as_ref().expect("bugs have outcomes");
        let test = record.test.as_ref().expect("bugs have tests");
        let kind = match outcome.classification {
            Classification::BugNumerical => "numerical inconsistency",
            _ => "behavioral inconsistency",
        };
        let mut out = format!("# Bug {signature}\n\n");
        out.push_str(&format!("- kind: {kind}\n"));
        out.push_str(&format!("- classification: {}\n", outcome.classification));
        out.push_str(&format!("- iteration: {}\n", record.id));
        out.push_str(&format!("- mode: {}\n", record.mode));
        out.push_str(&format!("- operators: {}\n", test.selected_ops.join(", ")));
        match &outcome.evidence {
            Some(BugEvidence::Behavioral {
                failing,
                error_type,
                top_frame,
            }) => {
                out.push_str(&format!("- failing backend: {failing}\n- error: {error_type}\n"));
                if let Some(frame) = top_frame {
                    out.push_str(&format!("- top frame: {frame}\n"));
                }
            }
            Some(BugEvidence::Numerical { output, .. }) => {
                if let Some(i) = output {
                    out.push_str(&format!("- first inconsistent output: {i}\n"));
                }
            }
            None => {}
        }
        out.push_str("\n## Reproduce\n\n```sh\n");
        out.push_str(&self.replay_command(record.id));
        out.push_str("\n```\n\n## Test\n\n```\n");
        out.push_str(test.source.trim_end_matches('\n'));
        out.push_str("\n```\n\n## Feedback\n\n```\n");
        out.push_str(outcome.feedback.body.trim_end_matches('\n'));
        out.push_str("\n```\n");
        for result in [&record.eager, &record.compiled].into_iter().flatten() {
            out.push_str(&format!("\n## {} result\n\n```json\n", result.backend));
            out.push_str(&serde_json::to_string_pretty(result).expect("results serialize"));
            out.push_str("\n```\n");
        }
        out
    }

    /// Read every record in id order. A torn final record is dropped with a
    /// warning; any other damage is an error.
    pub fn read_log(&self) -> Result<(Vec<IterationRecord>, bool), CampaignError> {
        let dir = self.root.join(LOG_DIR);
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| storage(&dir, e))? {
            let entry = entry.map_err(|e| storage(&dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            let Some(stem) = name.strip_suffix(".json") else {
                continue;
            };
            let id: u64 = stem
                .parse()
                .map_err(|_| CampaignError::Corrupt(format!("unexpected log file {name}")))?;
            ids.push(id);
        }
        ids.sort_unstable();
        for (expected, id) in ids.iter().enumerate() {
            if *id != expected as u64 {
                return Err(CampaignError::Corrupt(format!(
                    "log is missing record {expected}"
                )));
            }
        }
        let mut records = Vec::with_capacity(ids.len());
        let mut dropped = false;
        for id in ids.iter().copied() {
            let path = self.record_path(id);
            let bytes = fs::read(&path).map_err(|e| storage(&path, e))?;
            let parsed = if bytes.ends_with(b"\n") {
                serde_json::from_slice::<IterationRecord>(&bytes).map_err(|e| e.to_string())
            } else {
                Err("record is not newline-terminated".to_string())
            };
            match parsed {
                Ok(record) if record.id == id => records.push(record),
                Ok(record) => {
                    return Err(CampaignError::Corrupt(format!(
                        "{} holds record {}",
                        path.display(),
                        record.id
                    )))
                }
                Err(e) if id + 1 == ids.len() as u64 => {
                    log::warn!("dropping torn final record {}: {e}", path.display());
                    dropped = true;
                }
                Err(e) => {
                    return Err(CampaignError::Corrupt(format!("{}: {e}", path.display())))
                }
            }
        }
        Ok((records, dropped))
    }

    pub fn read_record(&self, id: u64) -> Result<IterationRecord, CampaignError> {
        let path = self.record_path(id);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CampaignError::MissingRecord(id),
            _ => storage(&path, e),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| CampaignError::Corrupt(format!("{}: {e}", path.display())))
    }

    pub fn read_state_snapshot(&self) -> Result<Option<CampaignState>, CampaignError> {
        let path = self.root.join(STATE_SNAPSHOT);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| CampaignError::Corrupt(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(storage(&path, e)),
        }
    }
}

/// Rebuild a campaign by folding its log over the initial state.
pub fn load_campaign(root: &Path) -> Result<LoadedCampaign, CampaignError> {
    let config_path = root.join(CONFIG_SNAPSHOT);
    if !config_path.exists() {
        return Err(CampaignError::NotACampaign(root.to_path_buf()));
    }
    let text = fs::read_to_string(&config_path).map_err(|e| storage(&config_path, e))?;
    let config = CampaignConfig::from_toml(&text, root)
        .map_err(|e| CampaignError::Corrupt(format!("{}: {e}", config_path.display())))?;
    let ops_path = root.join(OPERATORS_SNAPSHOT);
    let ops_text = fs::read_to_string(&ops_path).map_err(|e| storage(&ops_path, e))?;
    let table = parse_operator_set(&ops_text)
        .map_err(|e| CampaignError::Corrupt(format!("{}: {e}", ops_path.display())))?;
    let store = CampaignStore::open(root, &config);

    let mut state = CampaignState::new(table, config.seed);
    let (records, dropped_tail) = store.read_log()?;
    for record in &records {
        state
            .apply(record)
            .map_err(|e| CampaignError::Corrupt(e.to_string()))?;
    }
    if let Some(snapshot) = store.read_state_snapshot()? {
        if snapshot.iteration == state.iteration && snapshot != state {
            log::warn!("state.snapshot disagrees with the log; using the log");
        }
    }
    Ok(LoadedCampaign {
        store,
        config,
        state,
        dropped_tail,
    })
}

fn shell_quote(s: &str) -> String {
    if !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=:+,".contains(c))
    {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

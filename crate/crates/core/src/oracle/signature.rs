//! Bug deduplication keys.
//!
//! Behavioral bugs bucket on the exception type and the frame closest to the
//! raise site; the message is ignored because it usually embeds shapes or
//! values. Numerical bugs bucket on the sorted operator set of the test and on
//! whether the mismatch was structural.

use sha2::{Digest, Sha256};

use crate::types::TestCase;

use super::classify::{BugEvidence, Outcome};

/// Hex-encoded signature length.
const SIGNATURE_LEN: usize = 16;

/// Dedup signature for a bug outcome; `None` for non-bug outcomes.
pub fn bug_signature(outcome: &Outcome, test: &TestCase) -> Option<String> {
    if !outcome.classification.is_bug() {
        return None;
    }
    let mut hasher = Sha256::new();
    match outcome.evidence.as_ref()? {
        BugEvidence::Behavioral {
            error_type,
            top_frame,
            ..
        } => {
            hasher.update(b"behavioral\0");
            hasher.update(error_type.as_bytes());
            hasher.update(b"\0");
            hasher.update(top_frame.as_deref().unwrap_or("").as_bytes());
        }
        evidence @ BugEvidence::Numerical { .. } => {
            let mut ops: Vec<&str> = test.selected_ops.iter().map(String::as_str).collect();
            ops.sort_unstable();
            ops.dedup();
            hasher.update(b"numerical\0");
            for op in ops {
                hasher.update(op.as_bytes());
                hasher.update(b"\0");
            }
            hasher.update(if evidence.is_structural() { b"structure" } else { b"values___" });
        }
    }
    let digest = hex::encode(hasher.finalize());
    Some(digest[..SIGNATURE_LEN].to_string())
}

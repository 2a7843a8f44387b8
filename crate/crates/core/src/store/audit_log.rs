//! Append-only audit log and replay.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::RunManifest;
use crate::reconcile::AuditException;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditAction {
    RunStarted,
    RunFlattened,
    RunReconciled,
    ExceptionCreated,
    StatusChanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLogEntry {
    pub seq: u64,
    pub actor: String,
    pub action: AuditAction,
    /// A run id or an exception id.
    pub subject: String,
    pub before: Option<Value>,
    pub after: Option<Value>,
    pub timestamp: DateTime<Utc>,
}

/// State rebuilt from the log alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayedState {
    pub exceptions: BTreeMap<String, AuditException>,
    pub runs: BTreeMap<String, RunManifest>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("sequence gap: expected {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
    #[error("entry {seq} has no usable after-snapshot: {message}")]
    BadSnapshot { seq: u64, message: String },
}

/// Checks that sequence numbers run 1, 2, 3, ... without gaps.
pub fn check_sequence(entries: &[AuditLogEntry]) -> Result<(), ReplayError> {
    for (i, e) in entries.iter().enumerate() {
        let expected = i as u64 + 1;
        if e.seq != expected {
            return Err(ReplayError::Gap { expected, found: e.seq });
        }
    }
    Ok(())
}

fn snapshot<T: serde::de::DeserializeOwned>(entry: &AuditLogEntry) -> Result<T, ReplayError> {
    let value =
        entry.after.clone().ok_or_else(|| ReplayError::BadSnapshot { seq: entry.seq, message: "missing".into() })?;
    serde_json::from_value(value).map_err(|e| ReplayError::BadSnapshot { seq: entry.seq, message: e.to_string() })
}

pub fn replay(entries: &[AuditLogEntry]) -> Result<ReplayedState, ReplayError> {
    check_sequence(entries)?;
    let mut state = ReplayedState::default();
    for entry in entries {
        match entry.action {
            AuditAction::RunStarted | AuditAction::RunFlattened | AuditAction::RunReconciled => {
                let run: RunManifest = snapshot(entry)?;
                state.runs.insert(run.run_id.clone(), run);
            }
            AuditAction::ExceptionCreated | AuditAction::StatusChanged => {
                let ex: AuditException = snapshot(entry)?;
                state.exceptions.insert(ex.exception_id.clone(), ex);
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(seq: u64) -> AuditLogEntry {
        AuditLogEntry {
            seq,
            actor: "a".into(),
            action: AuditAction::RunStarted,
            subject: "r".into(),
            before: None,
            after: None,
            timestamp: DateTime::UNIX_EPOCH,
        }
    }

    #[test]
    fn sequence_must_be_gapless() {
        assert!(check_sequence(&[entry(1), entry(2)]).is_ok());
        assert_eq!(check_sequence(&[entry(1), entry(3)]), Err(ReplayError::Gap { expected: 2, found: 3 }));
        assert_eq!(check_sequence(&[entry(0)]), Err(ReplayError::Gap { expected: 1, found: 0 }));
    }

    #[test]
    fn missing_snapshot_is_reported() {
        assert!(matches!(replay(&[entry(1)]), Err(ReplayError::BadSnapshot { seq: 1, .. })));
    }

    #[test]
    fn action_names() {
        assert_eq!(serde_json::to_string(&AuditAction::StatusChanged).unwrap(), "\"status-changed\"");
    }
}

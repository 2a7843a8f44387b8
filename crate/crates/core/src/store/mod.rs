//! File-backed evidence store.
//!
//! Layout under the data directory:
//!
//! ```text
//! stage/                      statement text files
//! runs/<run_id>/run.json      run manifest
//! runs/<run_id>/raw.jsonl     one raw result per document
//! runs/<run_id>/flat.csv      one row per (document, field)
//! runs/<run_id>/report.jsonl  reconciliation exceptions
//! runs/<run_id>/summary.txt
//! exceptions.jsonl            exception ledger, last write per id wins
//! audit.log                   append-only JSON lines
//! ```
//!
//! A run directory is assembled under a temporary name and renamed into
//! place, so a run is either fully visible or absent.

pub mod audit_log;
pub mod query;
pub mod records;
pub mod stage;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use self::audit_log::{replay, AuditAction, AuditLogEntry, ReplayError};
use self::query::{ExceptionQuery, InvalidQuery, Page};
use self::records::{flatten_record, read_flat_csv, write_flat_csv, FlatRow, RawResultRecord};
use self::stage::DocumentStage;
use crate::clock::Clock;
use crate::corpus::read_truth_csv;
use crate::corpus::SourceRecord;
use crate::extract::ExtractionBatch;
use crate::fields::FieldKind;
use crate::reconcile::{AuditException, ExceptionStatus, ReconciliationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Persisted,
    Flattened,
    Reconciled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// Creation order within the store, starting at 1.
    pub ordinal: u64,
    pub model_version: String,
    pub documents: usize,
    pub read_errors: usize,
    pub fields: Vec<FieldKind>,
    pub state: RunState,
    pub created_at: DateTime<Utc>,
    pub flattened_at: Option<DateTime<Utc>>,
    pub reconciled_at: Option<DateTime<Utc>>,
    pub policy_version: Option<String>,
    pub exceptions: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("invalid run id {0:?}")]
    InvalidRunId(String),
    #[error("run {0} already exists")]
    DuplicateRun(String),
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("run {0} has not been flattened")]
    NotFlattened(String),
    #[error("exceptions for run {0} are already recorded")]
    AlreadyRecorded(String),
    #[error("unknown exception {0}")]
    UnknownException(String),
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: ExceptionStatus, to: ExceptionStatus },
    #[error("an actor is required")]
    MissingActor,
    #[error(transparent)]
    InvalidQuery(#[from] InvalidQuery),
    #[error("audit log: {0}")]
    Replay(#[from] ReplayError),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> StoreError {
    let context = context.into();
    move |source| StoreError::Io { context, source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let ctx = path.display().to_string();
    let mut f = File::create(&tmp).map_err(io_err(ctx.clone()))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(ctx.clone()))?;
    fs::rename(&tmp, path).map_err(io_err(ctx))
}

fn append_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let ctx = path.display().to_string();
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| io_err(ctx.clone())(e.into()))?;
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(ctx.clone()))?;
    f.write_all(&buf).and_then(|_| f.sync_data()).map_err(io_err(ctx))
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let ctx = path.display().to_string();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(ctx)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(ctx.clone()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: ctx.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

fn to_value<T: Serialize>(item: &T) -> serde_json::Value {
    serde_json::to_value(item).expect("store types serialize")
}

pub fn valid_run_id(run_id: &str) -> bool {
    !run_id.is_empty()
        && run_id.len() <= 128
        && !run_id.starts_with('.')
        && run_id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

/// Single-writer store. Mutations take `&mut self`; readers share `&self`.
pub struct EvidenceStore {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    runs: BTreeMap<String, RunManifest>,
    raw: BTreeMap<String, Vec<RawResultRecord>>,
    ledger: BTreeMap<String, AuditException>,
    log_len: u64,
}

impl std::fmt::Debug for EvidenceStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvidenceStore")
            .field("root", &self.root)
            .field("runs", &self.runs.len())
            .field("exceptions", &self.ledger.len())
            .finish()
    }
}

impl EvidenceStore {
    /// Opens (creating if needed) a store rooted at `root`. Leftovers of an
    /// interrupted run write are discarded.
    pub fn open(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let root = root.into();
        let runs_dir = root.join("runs");
        fs::create_dir_all(root.join("stage")).map_err(io_err(root.display().to_string()))?;
        fs::create_dir_all(&runs_dir).map_err(io_err(runs_dir.display().to_string()))?;

        let mut runs = BTreeMap::new();
        let mut raw = BTreeMap::new();
        for entry in fs::read_dir(&runs_dir).map_err(io_err(runs_dir.display().to_string()))? {
            let path = entry.map_err(io_err(runs_dir.display().to_string()))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if !path.is_dir() {
                continue;
            }
            if name.starts_with(".tmp-") {
                fs::remove_dir_all(&path).map_err(io_err(path.display().to_string()))?;
                continue;
            }
            let manifest_path = path.join("run.json");
            let text = fs::read_to_string(&manifest_path).map_err(io_err(manifest_path.display().to_string()))?;
            let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: manifest_path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
            raw.insert(name.clone(), read_lines(&path.join("raw.jsonl"))?);
            runs.insert(name, manifest);
        }

        let mut ledger = BTreeMap::new();
        for e in read_lines::<AuditException>(&root.join("exceptions.jsonl"))? {
            ledger.insert(e.exception_id.clone(), e);
        }
        let log: Vec<AuditLogEntry> = read_lines(&root.join("audit.log"))?;
        audit_log::check_sequence(&log)?;

        Ok(EvidenceStore { root, clock, runs, raw, ledger, log_len: log.len() as u64 })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage(&self) -> DocumentStage {
        DocumentStage::new(self.root.join("stage"))
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn exceptions_path(&self) -> PathBuf {
        self.root.join("exceptions.jsonl")
    }

    pub fn audit_log_path(&self) -> PathBuf {
        self.root.join("audit.log")
    }

    /// Runs in creation order.
    pub fn runs(&self) -> Vec<&RunManifest> {
        let mut runs: Vec<_> = self.runs.values().collect();
        runs.sort_by_key(|r| r.ordinal);
        runs
    }

    pub fn run(&self, run_id: &str) -> Option<&RunManifest> {
        self.runs.get(run_id)
    }

    pub fn latest_run(&self) -> Option<&RunManifest> {
        self.runs.values().max_by_key(|r| r.ordinal)
    }

    pub fn raw_records(&self, run_id: &str) -> Option<&[RawResultRecord]> {
        self.raw.get(run_id).map(Vec::as_slice)
    }

    pub fn exception(&self, id: &str) -> Option<&AuditException> {
        self.ledger.get(id)
    }

    pub fn exceptions(&self) -> impl Iterator<Item = &AuditException> {
        self.ledger.values()
    }

    pub fn log_len(&self) -> u64 {
        self.log_len
    }

    /// Source-of-truth records kept beside the stage; empty when absent.
    pub fn truth(&self) -> Result<Vec<SourceRecord>, StoreError> {
        let path = self.root.join("truth.csv");
        if !path.exists() {
            return Ok(Vec::new());
        }
        read_truth_csv(&path).map_err(io_err(path.display().to_string()))
    }

    fn append_log(
        &mut self,
        actor: &str,
        action: AuditAction,
        subject: &str,
        before: Option<serde_json::Value>,
        after: Option<serde_json::Value>,
    ) -> Result<(), StoreError> {
        let entry = AuditLogEntry {
            seq: self.log_len + 1,
            actor: actor.to_string(),
            action,
            subject: subject.to_string(),
            before,
            after,
            timestamp: self.clock.now(),
        };
        append_lines(&self.audit_log_path(), &[entry])?;
        self.log_len += 1;
        Ok(())
    }

    fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        write_atomic(&self.run_dir(&manifest.run_id).join("run.json"), format!("{json}\n").as_bytes())
    }

    pub fn read_audit_log(&self) -> Result<Vec<AuditLogEntry>, StoreError> {
        read_lines(&self.audit_log_path())
    }

    /// Persists one raw record per extraction under a fresh run id.
    pub fn persist_raw(&mut self, batch: &ExtractionBatch, run_id: &str, actor: &str) -> Result<usize, StoreError> {
        if !valid_run_id(run_id) {
            return Err(StoreError::InvalidRunId(run_id.to_string()));
        }
        let final_dir = self.run_dir(run_id);
        if self.runs.contains_key(run_id) || final_dir.exists() {
            return Err(StoreError::DuplicateRun(run_id.to_string()));
        }
        let now = self.clock.now();
        let mut records: Vec<RawResultRecord> =
            batch.extractions.iter().map(|e| RawResultRecord::from_extraction(e, run_id, now)).collect();
        records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

        let mut fields: Vec<FieldKind> = records.iter().flat_map(|r| r.payload.keys().copied()).collect();
        fields.sort();
        fields.dedup();
        let manifest = RunManifest {
            run_id: run_id.to_string(),
            ordinal: self.runs.values().map(|r| r.ordinal).max().unwrap_or(0) + 1,
            model_version: batch.model_version.clone(),
            documents: records.len(),
            read_errors: records.iter().filter(|r| r.read_error.is_some()).count(),
            fields,
            state: RunState::Persisted,
            created_at: now,
            flattened_at: None,
            reconciled_at: None,
            policy_version: None,
            exceptions: None,
        };

        let tmp_dir = self.root.join("runs").join(format!(".tmp-{run_id}"));
        let _ = fs::remove_dir_all(&tmp_dir);
        fs::create_dir_all(&tmp_dir).map_err(io_err(tmp_dir.display().to_string()))?;
        let write_all = || -> Result<(), StoreError> {
            append_lines(&tmp_dir.join("raw.jsonl"), &records)?;
            let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            write_atomic(&tmp_dir.join("run.json"), format!("{json}\n").as_bytes())?;
            fs::rename(&tmp_dir, &final_dir).map_err(io_err(final_dir.display().to_string()))
        };
        if let Err(e) = write_all() {
            let _ = fs::remove_dir_all(&tmp_dir);
            return Err(e);
        }

        self.append_log(actor, AuditAction::RunStarted, run_id, None, Some(to_value(&manifest)))?;
        let count = records.len();
        self.raw.insert(run_id.to_string(), records);
        self.runs.insert(run_id.to_string(), manifest);
        Ok(count)
    }

    /// Produces one row per (document, field). The first call writes
    /// `flat.csv`; later calls return the same rows without side effects.
    pub fn flatten(&mut self, run_id: &str, actor: &str) -> Result<Vec<FlatRow>, StoreError> {
        let manifest = self.runs.get(run_id).ok_or_else(|| StoreError::UnknownRun(run_id.to_string()))?.clone();
        let rows: Vec<FlatRow> = self.raw[run_id].iter().flat_map(flatten_record).collect();
        if manifest.state > RunState::Persisted {
            return Ok(rows);
        }
        let mut buf = Vec::new();
        write_flat_csv(&mut buf, &rows).map_err(io_err("flat.csv"))?;
        write_atomic(&self.run_dir(run_id).join("flat.csv"), &buf)?;

        let mut next = manifest.clone();
        next.state = RunState::Flattened;
        next.flattened_at = Some(self.clock.now());
        self.write_manifest(&next)?;
        self.append_log(actor, AuditAction::RunFlattened, run_id, Some(to_value(&manifest)), Some(to_value(&next)))?;
        self.runs.insert(run_id.to_string(), next);
        Ok(rows)
    }

    pub fn read_flat(&self, run_id: &str) -> Result<Vec<FlatRow>, StoreError> {
        let manifest = self.runs.get(run_id).ok_or_else(|| StoreError::UnknownRun(run_id.to_string()))?;
        if manifest.state < RunState::Flattened {
            return Err(StoreError::NotFlattened(run_id.to_string()));
        }
        let path = self.run_dir(run_id).join("flat.csv");
        let file = File::open(&path).map_err(io_err(path.display().to_string()))?;
        read_flat_csv(file).map_err(io_err(path.display().to_string()))
    }

    /// Stores the report's exceptions as open ledger entries.
    pub fn record_exceptions(&mut self, report: &ReconciliationReport, actor: &str) -> Result<usize, StoreError> {
        let run_id = report.run_id.as_str();
        let manifest = self.runs.get(run_id).ok_or_else(|| StoreError::UnknownRun(run_id.to_string()))?.clone();
        match manifest.state {
            RunState::Persisted => return Err(StoreError::NotFlattened(run_id.to_string())),
            RunState::Reconciled => return Err(StoreError::AlreadyRecorded(run_id.to_string())),
            RunState::Flattened => {}
        }
        let dir = self.run_dir(run_id);
        report.write(&dir).map_err(io_err(dir.display().to_string()))?;

        let fresh: Vec<&AuditException> =
            report.exceptions.iter().filter(|e| !self.ledger.contains_key(&e.exception_id)).collect();
        append_lines(&self.exceptions_path(), &fresh)?;
        for e in &fresh {
            self.append_log(actor, AuditAction::ExceptionCreated, &e.exception_id, None, Some(to_value(e)))?;
            self.ledger.insert(e.exception_id.clone(), (*e).clone());
        }

        let mut next = manifest.clone();
        next.state = RunState::Reconciled;
        next.reconciled_at = Some(self.clock.now());
        next.policy_version = Some(report.policy_version.clone());
        next.exceptions = Some(report.exceptions.len());
        self.write_manifest(&next)?;
        self.append_log(actor, AuditAction::RunReconciled, run_id, Some(to_value(&manifest)), Some(to_value(&next)))?;
        self.runs.insert(run_id.to_string(), next);
        Ok(fresh.len())
    }

    /// Moves an exception along the disposition state machine.
    pub fn update_status(
        &mut self,
        exception_id: &str,
        new_status: ExceptionStatus,
        actor: &str,
        note: &str,
    ) -> Result<AuditException, StoreError> {
        if actor.trim().is_empty() {
            return Err(StoreError::MissingActor);
        }
        let before = self
            .ledger
            .get(exception_id)
            .ok_or_else(|| StoreError::UnknownException(exception_id.to_string()))?
            .clone();
        if !before.status.can_transition_to(new_status) {
            return Err(StoreError::IllegalTransition { from: before.status, to: new_status });
        }
        let mut after = before.clone();
        after.status = new_status;
        after.updated_at = self.clock.now().max(before.updated_at);
        if !note.is_empty() {
            after.disposition_note = note.to_string();
        }
        append_lines(&self.exceptions_path(), &[&after])?;
        self.append_log(
            actor,
            AuditAction::StatusChanged,
            exception_id,
            Some(to_value(&before)),
            Some(to_value(&after)),
        )?;
        self.ledger.insert(exception_id.to_string(), after.clone());
        Ok(after)
    }

    pub fn query(&self, query: &ExceptionQuery) -> Result<Page<AuditException>, StoreError> {
        Ok(query.apply(self.ledger.values())?)
    }

    /// Rebuilds ledger and run state from the audit log and compares it with
    /// the live state.
    pub fn verify_replay(&self) -> Result<bool, StoreError> {
        let state = replay(&self.read_audit_log()?)?;
        Ok(state.exceptions == self.ledger && state.runs == self.runs)
    }
}

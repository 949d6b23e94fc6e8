//! Append-only log of unsafe routing decisions.
//!
//! The log is line-delimited JSON. The first line is a schema header; after
//! that come `record` lines and periodic `snapshot` lines holding the
//! per-category counters at that sequence number. Reopening a log replays
//! the records to recover the sequence number and counters.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::RoutingDecision;
use crate::text::sha256_hex;

pub const AUDIT_SCHEMA: &str = "tacos.audit";
const AUDIT_SCHEMA_VERSION: u32 = 1;

/// Labels whose query text is never written to the log.
const DIGEST_ONLY_LABELS: [&str; 2] = ["private_information_injection", "private_information_leakage"];

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("decision for {0:?} is not flagged for unsafe logging")]
    NotLoggable(String),
    #[error("audit storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("audit log {path} line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnsafeAuditRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub label_id: String,
    /// SHA-256 of the raw query text.
    pub query_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        schema: String,
        version: u32,
    },
    Record(UnsafeAuditRecord),
    Snapshot {
        seq: u64,
        timestamp: DateTime<Utc>,
        counters: BTreeMap<String, u64>,
    },
}

struct State {
    sink: Box<dyn Write + Send>,
    next_seq: u64,
    counters: BTreeMap<String, u64>,
}

pub struct AuditStore {
    state: Mutex<State>,
    path: Option<PathBuf>,
    retain_text: bool,
    snapshot_every: u64,
}

impl std::fmt::Debug for AuditStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditStore")
            .field("path", &self.path)
            .field("retain_text", &self.retain_text)
            .field("snapshot_every", &self.snapshot_every)
            .finish_non_exhaustive()
    }
}

fn write_line(sink: &mut dyn Write, line: &Line) -> std::io::Result<()> {
    let mut buf = serde_json::to_vec(line).map_err(std::io::Error::other)?;
    buf.push(b'\n');
    sink.write_all(&buf)?;
    sink.flush()
}

impl AuditStore {
    /// Opens or creates a log file, replaying any existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AuditError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut next_seq = 1;
        let mut counters = BTreeMap::new();
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        if !fresh {
            let corrupt = |line: usize, message: String| AuditError::Corrupt {
                path: path.display().to_string(),
                line,
                message,
            };
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: Line =
                    serde_json::from_str(&line).map_err(|e| corrupt(i + 1, e.to_string()))?;
                match parsed {
                    Line::Header { schema, version } if i == 0 => {
                        if schema != AUDIT_SCHEMA || version != AUDIT_SCHEMA_VERSION {
                            return Err(corrupt(1, format!("unsupported schema {schema} v{version}")));
                        }
                    }
                    _ if i == 0 => return Err(corrupt(1, "missing schema header".into())),
                    Line::Header { .. } => return Err(corrupt(i + 1, "repeated header".into())),
                    Line::Record(r) => {
                        if r.seq != next_seq {
                            return Err(corrupt(i + 1, format!("expected seq {next_seq}, found {}", r.seq)));
                        }
                        next_seq += 1;
                        *counters.entry(r.label_id).or_insert(0) += 1;
                    }
                    Line::Snapshot { .. } => {}
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            write_line(
                &mut file,
                &Line::Header {
                    schema: AUDIT_SCHEMA.into(),
                    version: AUDIT_SCHEMA_VERSION,
                },
            )?;
        }
        Ok(Self {
            state: Mutex::new(State {
                sink: Box::new(file),
                next_seq,
                counters,
            }),
            path: Some(path.to_path_buf()),
            retain_text: true,
            snapshot_every: 100,
        })
    }

    /// Log backed by an arbitrary writer. A header is written immediately.
    pub fn with_writer(writer: impl Write + Send + 'static) -> Result<Self, AuditError> {
        let mut sink: Box<dyn Write + Send> = Box::new(writer);
        write_line(
            &mut sink,
            &Line::Header {
                schema: AUDIT_SCHEMA.into(),
                version: AUDIT_SCHEMA_VERSION,
            },
        )?;
        Ok(Self {
            state: Mutex::new(State {
                sink,
                next_seq: 1,
                counters: BTreeMap::new(),
            }),
            path: None,
            retain_text: true,
            snapshot_every: 100,
        })
    }

    pub fn in_memory() -> Self {
        Self::with_writer(std::io::sink()).expect("sink never fails")
    }

    /// Whether raw text is kept for labels outside the digest-only set.
    pub fn retain_text(mut self, retain: bool) -> Self {
        self.retain_text = retain;
        self
    }

    pub fn snapshot_every(mut self, every: u64) -> Self {
        self.snapshot_every = every.max(1);
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn record_unsafe(
        &self,
        decision: &RoutingDecision,
        query_text: &str,
    ) -> Result<UnsafeAuditRecord, AuditError> {
        if !decision.log_unsafe {
            return Err(AuditError::NotLoggable(decision.label_id.clone()));
        }
        let digest_only = DIGEST_ONLY_LABELS.contains(&decision.label_id.as_str());
        let mut state = self.lock();
        let record = UnsafeAuditRecord {
            seq: state.next_seq,
            timestamp: Utc::now(),
            label_id: decision.label_id.clone(),
            query_digest: sha256_hex(query_text.as_bytes()),
            query_text: (self.retain_text && !digest_only).then(|| query_text.to_string()),
        };
        write_line(&mut state.sink, &Line::Record(record.clone()))?;
        state.next_seq += 1;
        *state.counters.entry(record.label_id.clone()).or_insert(0) += 1;
        if record.seq.is_multiple_of(self.snapshot_every) {
            let snapshot = Line::Snapshot {
                seq: record.seq,
                timestamp: record.timestamp,
                counters: state.counters.clone(),
            };
            if let Err(e) = write_line(&mut state.sink, &snapshot) {
                tracing::warn!(error = %e, "audit snapshot write failed");
            }
        }
        Ok(record)
    }

    pub fn counters(&self) -> BTreeMap<String, u64> {
        self.lock().counters.clone()
    }

    pub fn count(&self, label_id: &str) -> u64 {
        self.lock().counters.get(label_id).copied().unwrap_or(0)
    }

    /// Number of records appended so far.
    pub fn len(&self) -> u64 {
        self.lock().next_seq - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads every record from a log file in order.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<UnsafeAuditRecord>, AuditError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line) {
            Ok(Line::Record(r)) => out.push(r),
            Ok(_) => {}
            Err(e) => {
                return Err(AuditError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

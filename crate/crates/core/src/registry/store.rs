//! On-disk layout: `events.jsonl`, one [`LogRecord`] per line and never
//! rewritten, plus `snapshot.json`, a full state image covering the first
//! `log_len` records. Restore loads the snapshot and replays the tail.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{DatasetId, LabelMap, LabeledDataset, Role};
use super::Outcome;
use crate::engine::{Session, SessionId};
use crate::planner::MeterSpec;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt event log record {record} (line {line}, byte offset {offset}): {reason}")]
    Corrupt {
        record: u64,
        line: usize,
        offset: u64,
        reason: String,
    },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Dataset items as written to disk. Sealed label maps are kept opaque
/// (base64 of their JSON) so a casual read of the store does not show them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoredItems {
    Plain(LabelMap),
    Opaque(String),
}

impl StoredItems {
    pub fn encode(items: &LabelMap, sealed: bool) -> Self {
        if sealed {
            let json = serde_json::to_vec(items).expect("label maps always serialize");
            StoredItems::Opaque(STANDARD.encode(json))
        } else {
            StoredItems::Plain(items.clone())
        }
    }

    pub fn decode(&self) -> Result<LabelMap, String> {
        match self {
            StoredItems::Plain(items) => Ok(items.clone()),
            StoredItems::Opaque(text) => {
                let bytes = STANDARD.decode(text).map_err(|e| format!("bad base64 payload: {e}"))?;
                serde_json::from_slice(&bytes).map_err(|e| format!("bad label payload: {e}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDataset {
    pub id: DatasetId,
    pub sealed: bool,
    pub owner_role: Role,
    pub created_at_ms: u64,
    pub items: StoredItems,
}

impl StoredDataset {
    pub fn from_dataset(d: &LabeledDataset) -> Self {
        Self {
            id: d.id().clone(),
            sealed: d.sealed(),
            owner_role: d.owner_role(),
            created_at_ms: d.created_at_ms(),
            items: StoredItems::encode(d.labels(), d.sealed()),
        }
    }

    pub fn into_dataset(self) -> Result<LabeledDataset, String> {
        let items = self.items.decode()?;
        Ok(LabeledDataset::new(self.id, items, self.sealed, self.owner_role, self.created_at_ms))
    }
}

/// A state change, recorded after it has been validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    RegisterDataset { dataset: StoredDataset },
    CreateSession {
        session: SessionId,
        spec: MeterSpec,
        val: DatasetId,
        test: DatasetId,
    },
    Submit { session: SessionId, predictions: LabelMap },
    Revert { session: SessionId },
    Handoff { session: SessionId },
    Rotate { session: SessionId, test: DatasetId },
    Close { session: SessionId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdempotencyTag {
    pub key: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Position in the log, from 0.
    pub record: u64,
    pub at_ms: u64,
    pub principal: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency: Option<IdempotencyTag>,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdempotencyEntry {
    pub principal: String,
    pub key: String,
    pub fingerprint: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    /// Number of log records folded into this image.
    pub log_len: u64,
    pub datasets: Vec<StoredDataset>,
    pub sessions: Vec<Session>,
    pub idempotency: Vec<IdempotencyEntry>,
}

impl Snapshot {
    pub fn new(log_len: u64, datasets: Vec<StoredDataset>, sessions: Vec<Session>, idempotency: Vec<IdempotencyEntry>) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            log_len,
            datasets,
            sessions,
            idempotency,
        }
    }
}

/// Append handle on a store directory.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    log: File,
    log_len: u64,
}

/// Everything found on disk at open time.
#[derive(Debug)]
pub struct Loaded {
    pub snapshot: Option<Snapshot>,
    /// Records past the snapshot, in order.
    pub tail: Vec<LogRecord>,
}

impl Store {
    /// Open (creating if needed) the store in `dir` and read its contents.
    pub fn open(dir: impl AsRef<Path>) -> Result<(Self, Loaded), StoreError> {
        Self::open_inner(dir.as_ref(), true)
    }

    /// Like [`Store::open`], but ignore the snapshot so the tail is the whole
    /// log.
    pub fn open_log_only(dir: impl AsRef<Path>) -> Result<(Self, Loaded), StoreError> {
        Self::open_inner(dir.as_ref(), false)
    }

    fn open_inner(dir: &Path, use_snapshot: bool) -> Result<(Self, Loaded), StoreError> {
        let dir = dir.to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let snapshot = match fs::read(&snap_path) {
            _ if !use_snapshot => None,
            Ok(bytes) => {
                let snap: Snapshot =
                    serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptSnapshot(e.to_string()))?;
                if snap.version != SNAPSHOT_VERSION {
                    return Err(StoreError::CorruptSnapshot(format!("unsupported version {}", snap.version)));
                }
                Some(snap)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(StoreError::io(&snap_path, e)),
        };

        let log_path = dir.join(EVENTS_FILE);
        let records = read_log(&log_path)?;
        let skip = snapshot.as_ref().map_or(0, |s| s.log_len);
        if (records.len() as u64) < skip {
            return Err(StoreError::CorruptSnapshot(format!(
                "snapshot covers {skip} records but the log holds {}",
                records.len()
            )));
        }
        let log_len = records.len() as u64;
        let tail = records.into_iter().skip(skip as usize).collect();

        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| StoreError::io(&log_path, e))?;
        Ok((Self { dir, log, log_len }, Loaded { snapshot, tail }))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_len(&self) -> u64 {
        self.log_len
    }

    /// Append one record and flush it to the OS.
    pub fn append(&mut self, record: &LogRecord) -> Result<(), StoreError> {
        debug_assert_eq!(record.record, self.log_len);
        let mut line = serde_json::to_vec(record).expect("log records always serialize");
        line.push(b'\n');
        let path = self.dir.join(EVENTS_FILE);
        self.log.write_all(&line).map_err(|e| StoreError::io(&path, e))?;
        self.log.flush().map_err(|e| StoreError::io(&path, e))?;
        self.log_len += 1;
        Ok(())
    }

    /// Replace the snapshot atomically.
    pub fn write_snapshot(&self, snapshot: &Snapshot) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(snapshot).expect("snapshots always serialize");
        fs::write(&tmp, bytes).map_err(|e| StoreError::io(&tmp, e))?;
        let dest = self.dir.join(SNAPSHOT_FILE);
        fs::rename(&tmp, &dest).map_err(|e| StoreError::io(&dest, e))
    }
}

fn read_log(path: &Path) -> Result<Vec<LogRecord>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut offset = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let read = reader.read_until(b'\n', &mut buf).map_err(|e| StoreError::io(path, e))?;
        if read == 0 {
            break;
        }
        let index = records.len() as u64;
        let corrupt = |reason: String| StoreError::Corrupt {
            record: index,
            line: index as usize + 1,
            offset,
            reason,
        };
        if buf.last() != Some(&b'\n') {
            return Err(corrupt("truncated record (no line terminator)".into()));
        }
        let record: LogRecord =
            serde_json::from_slice(&buf[..buf.len() - 1]).map_err(|e| corrupt(e.to_string()))?;
        if record.record != index {
            return Err(corrupt(format!("out-of-order record number {}", record.record)));
        }
        records.push(record);
        offset += read as u64;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sealed_items_are_opaque_at_rest() {
        let mut items = LabelMap::new();
        items.insert("secret-id".into(), 42);
        let stored = StoredItems::encode(&items, true);
        let text = serde_json::to_string(&stored).unwrap();
        assert!(!text.contains("secret-id"));
        assert_eq!(stored.decode().unwrap(), items);
        assert!(matches!(StoredItems::encode(&items, false), StoredItems::Plain(_)));
    }

    #[test]
    fn empty_directory_opens_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (store, loaded) = Store::open(dir.path()).unwrap();
        assert_eq!(store.log_len(), 0);
        assert!(loaded.snapshot.is_none());
        assert!(loaded.tail.is_empty());
    }

    #[test]
    fn garbage_line_names_record_and_offset() {
        let dir = tempfile::tempdir().unwrap();
        let rec = LogRecord {
            record: 0,
            at_ms: 1,
            principal: "ann".into(),
            role: Role::Admin,
            idempotency: None,
            event: Event::Revert { session: "s".into() },
        };
        let first = serde_json::to_string(&rec).unwrap();
        fs::write(dir.path().join(EVENTS_FILE), format!("{first}\n{{not json\n")).unwrap();
        match Store::open(dir.path()) {
            Err(StoreError::Corrupt { record, line, offset, .. }) => {
                assert_eq!((record, line), (1, 2));
                assert_eq!(offset, first.len() as u64 + 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

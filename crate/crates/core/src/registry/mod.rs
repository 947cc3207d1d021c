//! Datasets and sessions behind role checks.
//!
//! Every request names a [`Principal`]; the role check runs before any data
//! is touched. Sealed labels leave the registry only through
//! [`Registry::read_labels`] for labeler and admin principals. Developers get
//! ids, signals and redacted reports.
//!
//! With a store attached, each accepted mutation is appended to the event log
//! before it takes effect in memory, so a restart replays to the same state.

mod dataset;
mod store;
mod upload;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{EngineError, ErrorClass, Session, SessionId, SessionState, SignalReport, SubmissionRecord};
use crate::planner::{MeterSpec, Mode, PlanReport};

pub use dataset::{DatasetId, LabelMap, LabelView, LabeledDataset, Principal, Role};
pub use store::{
    Event, IdempotencyEntry, IdempotencyTag, LogRecord, Snapshot, Store, StoreError, StoredDataset, StoredItems,
    EVENTS_FILE, SNAPSHOT_FILE,
};
pub use upload::{parse_records, write_records, RecordKind, UploadError};

/// Snapshot after this many log records unless configured otherwise.
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{role} principal `{principal}` may not {action}")]
    Forbidden {
        principal: String,
        role: Role,
        action: &'static str,
    },
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("dataset `{0}` already exists and cannot be changed")]
    Immutable(DatasetId),
    #[error("dataset has no items")]
    EmptyDataset,
    #[error("example ids must be nonempty")]
    EmptyExampleId,
    #[error("stale sequence number: expected {expected}, session is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("idempotency key `{0}` was already used for a different request")]
    IdempotencyMismatch(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// Broad failure class, shared by the CLI exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Validation,
    Authorization,
    State,
    NotFound,
    Storage,
}

impl RegistryError {
    pub fn kind(&self) -> FailureKind {
        match self {
            RegistryError::Forbidden { .. } => FailureKind::Authorization,
            RegistryError::NotFound { .. } => FailureKind::NotFound,
            RegistryError::Immutable(_) | RegistryError::Conflict { .. } | RegistryError::IdempotencyMismatch(_) => {
                FailureKind::State
            }
            RegistryError::EmptyDataset | RegistryError::EmptyExampleId => FailureKind::Validation,
            RegistryError::Engine(e) => match e.class() {
                ErrorClass::Validation => FailureKind::Validation,
                ErrorClass::State => FailureKind::State,
            },
            RegistryError::Storage(_) => FailureKind::Storage,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::Forbidden { .. } => "forbidden",
            RegistryError::NotFound { .. } => "not_found",
            RegistryError::Immutable(_) => "dataset_immutable",
            RegistryError::EmptyDataset => "empty_dataset",
            RegistryError::EmptyExampleId => "empty_example_id",
            RegistryError::Conflict { .. } => "sequence_conflict",
            RegistryError::IdempotencyMismatch(_) => "idempotency_mismatch",
            RegistryError::Engine(e) => e.code(),
            RegistryError::Storage(_) => "storage_fault",
        }
    }
}

type Result<T> = std::result::Result<T, RegistryError>;

/// Result of an applied mutation, kept for idempotent retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Dataset { id: DatasetId },
    Session { summary: Box<SessionSummary> },
    Report { report: Box<SignalReport> },
    Rotated { retired: DatasetId, report: Box<SignalReport> },
}

/// Dataset metadata; safe for every role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: DatasetId,
    pub len: usize,
    pub sealed: bool,
    pub owner_role: Role,
    pub created_at_ms: u64,
}

impl From<&LabeledDataset> for DatasetInfo {
    fn from(d: &LabeledDataset) -> Self {
        Self {
            id: d.id().clone(),
            len: d.len(),
            sealed: d.sealed(),
            owner_role: d.owner_role(),
            created_at_ms: d.created_at_ms(),
        }
    }
}

/// Session overview returned by create/rotate and status calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: SessionId,
    pub spec: MeterSpec,
    pub plan: PlanReport,
    pub val: DatasetId,
    pub test: DatasetId,
    pub state: SessionState,
    pub seq: u64,
    pub retired_tests: Vec<DatasetId>,
    pub report: SignalReport,
}

/// One history row as shown to a principal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub step: u32,
    pub tenant: usize,
    pub digest: String,
    pub timestamp_ms: u64,
    pub val_loss: f64,
    /// Omitted for developers.
    pub test_loss: Option<f64>,
    /// Omitted for developers.
    pub empirical_overfitting: Option<f64>,
    /// Raw band; omitted in incremental mode for developers.
    pub signal: Option<usize>,
}

impl RecordView {
    fn new(r: &SubmissionRecord, role: Role, mode: Mode) -> Self {
        let full = role != Role::Developer;
        Self {
            step: r.step,
            tenant: r.tenant,
            digest: r.digest.clone(),
            timestamp_ms: r.timestamp_ms,
            val_loss: r.val_loss,
            test_loss: full.then_some(r.test_loss),
            empirical_overfitting: full.then_some(r.empirical_overfitting),
            signal: (full || mode == Mode::Regular).then_some(r.signal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub session: SessionId,
    pub seq: u64,
    pub retained: Vec<RecordView>,
    pub reverted: Vec<RecordView>,
}

/// Optimistic-concurrency and retry controls for a mutation.
#[derive(Debug, Clone, Default)]
pub struct Mutation {
    /// Reject unless the session is at this sequence number.
    pub expected_seq: Option<u64>,
    /// Replaying a request with a used key returns the stored outcome.
    pub idempotency_key: Option<String>,
}

/// The registry's in-memory state plus an optional durable store.
#[derive(Debug)]
pub struct Registry {
    datasets: BTreeMap<DatasetId, LabeledDataset>,
    sessions: BTreeMap<SessionId, Session>,
    idempotency: BTreeMap<(String, String), IdempotencyEntry>,
    log_len: u64,
    store: Option<Store>,
    snapshot_every: u64,
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

fn fingerprint(op: &str, payload: &impl Serialize) -> String {
    let mut h = Sha256::new();
    h.update(op.as_bytes());
    h.update(b"\0");
    h.update(serde_json::to_vec(payload).expect("request payloads serialize"));
    hex::encode(h.finalize())
}

fn forbidden(p: &Principal, action: &'static str) -> RegistryError {
    RegistryError::Forbidden {
        principal: p.name.clone(),
        role: p.role,
        action,
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Self {
            datasets: BTreeMap::new(),
            sessions: BTreeMap::new(),
            idempotency: BTreeMap::new(),
            log_len: 0,
            store: None,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }

    /// Open a durable registry at `dir`, restoring whatever it holds.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let (store, loaded) = Store::open(dir)?;
        let mut reg = Self::in_memory();
        if let Some(snap) = loaded.snapshot {
            reg.load_snapshot(snap)?;
        }
        for record in loaded.tail {
            let index = record.record;
            reg.apply(&record).map_err(|e| {
                StoreError::Corrupt {
                    record: index,
                    line: index as usize + 1,
                    offset: 0,
                    reason: format!("record does not replay: {e}"),
                }
            })?;
        }
        reg.store = Some(store);
        Ok(reg)
    }

    /// Replay the whole event log at `dir` from scratch, ignoring any
    /// snapshot, and return the outcome of every record in order.
    pub fn replay_log(dir: impl AsRef<Path>) -> Result<Vec<Outcome>> {
        let (_, loaded) = Store::open_log_only(dir)?;
        let mut reg = Self::in_memory();
        loaded.tail.iter().map(|record| reg.apply(record)).collect()
    }

    pub fn with_snapshot_every(mut self, every: u64) -> Self {
        self.snapshot_every = every.max(1);
        self
    }

    pub fn is_durable(&self) -> bool {
        self.store.is_some()
    }

    /// Number of events applied since the store was created.
    pub fn log_len(&self) -> u64 {
        self.log_len
    }

    fn load_snapshot(&mut self, snap: Snapshot) -> Result<()> {
        for stored in snap.datasets {
            let d = stored
                .into_dataset()
                .map_err(|e| StoreError::CorruptSnapshot(e))?;
            self.datasets.insert(d.id().clone(), d);
        }
        for s in snap.sessions {
            self.sessions.insert(s.id().clone(), s);
        }
        for entry in snap.idempotency {
            self.idempotency.insert((entry.principal.clone(), entry.key.clone()), entry);
        }
        self.log_len = snap.log_len;
        Ok(())
    }

    /// Full state image.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot::new(
            self.log_len,
            self.datasets.values().map(StoredDataset::from_dataset).collect(),
            self.sessions.values().cloned().collect(),
            self.idempotency.values().cloned().collect(),
        )
    }

    /// Write a snapshot now, if durable.
    pub fn checkpoint(&self) -> Result<()> {
        if let Some(store) = &self.store {
            store.write_snapshot(&self.snapshot())?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical state, for comparing a restored registry
    /// with the one that wrote the log.
    pub fn state_digest(&self) -> String {
        let mut h = Sha256::new();
        for d in self.datasets.values() {
            h.update(serde_json::to_vec(&DatasetInfo::from(d)).expect("serializes"));
            h.update(serde_json::to_vec(d.labels()).expect("serializes"));
        }
        for s in self.sessions.values() {
            h.update(serde_json::to_vec(s).expect("serializes"));
        }
        for e in self.idempotency.values() {
            h.update(serde_json::to_vec(e).expect("serializes"));
        }
        h.update(self.log_len.to_le_bytes());
        hex::encode(h.finalize())
    }

    // ---- reads ----

    fn dataset(&self, id: &DatasetId) -> Result<&LabeledDataset> {
        self.datasets.get(id).ok_or_else(|| RegistryError::NotFound {
            kind: "dataset",
            id: id.0.clone(),
        })
    }

    fn session(&self, id: &SessionId) -> Result<&Session> {
        self.sessions.get(id).ok_or_else(|| RegistryError::NotFound {
            kind: "session",
            id: id.0.clone(),
        })
    }

    /// Labels, or just ids when a developer reads a sealed dataset.
    pub fn read_labels(&self, principal: &Principal, id: &DatasetId) -> Result<LabelView> {
        let d = self.dataset(id)?;
        if d.sealed() && !principal.role.reads_sealed() {
            return Ok(LabelView::IdsOnly {
                dataset: d.id().clone(),
                ids: d.ids().map(str::to_string).collect(),
            });
        }
        Ok(LabelView::Full {
            dataset: d.id().clone(),
            labels: d.labels().clone(),
        })
    }

    pub fn dataset_info(&self, _principal: &Principal, id: &DatasetId) -> Result<DatasetInfo> {
        self.dataset(id).map(DatasetInfo::from)
    }

    pub fn list_datasets(&self, _principal: &Principal) -> Vec<DatasetInfo> {
        self.datasets.values().map(DatasetInfo::from).collect()
    }

    pub fn list_sessions(&self, principal: &Principal) -> Vec<SessionSummary> {
        self.sessions.values().map(|s| summarize(s, principal.role)).collect()
    }

    pub fn session_summary(&self, principal: &Principal, id: &SessionId) -> Result<SessionSummary> {
        self.session(id).map(|s| summarize(s, principal.role))
    }

    pub fn status(&self, principal: &Principal, id: &SessionId) -> Result<SignalReport> {
        self.session(id).map(|s| view_report(s.report(), principal.role))
    }

    pub fn history(&self, principal: &Principal, id: &SessionId) -> Result<HistoryView> {
        let s = self.session(id)?;
        let mode = s.spec().mode;
        let rows = |records: &[SubmissionRecord]| -> Vec<RecordView> {
            records.iter().map(|r| RecordView::new(r, principal.role, mode)).collect()
        };
        Ok(HistoryView {
            session: s.id().clone(),
            seq: s.seq(),
            retained: rows(s.history()),
            reverted: rows(s.reverted()),
        })
    }

    /// Ids of a bound dataset; what a developer needs to produce predictions.
    pub fn example_ids(&self, _principal: &Principal, id: &DatasetId) -> Result<Vec<String>> {
        Ok(self.dataset(id)?.ids().map(str::to_string).collect())
    }

    // ---- mutations ----

    /// Register a dataset. Sealed datasets need a labeler or admin.
    pub fn register_dataset(
        &mut self,
        principal: &Principal,
        requested_id: Option<DatasetId>,
        items: LabelMap,
        sealed: bool,
        now_ms: u64,
        m: &Mutation,
    ) -> Result<DatasetId> {
        if sealed && !principal.role.reads_sealed() {
            return Err(forbidden(principal, "register sealed datasets"));
        }
        let fp = fingerprint("register", &(&requested_id, &items, sealed));
        if let Some(Outcome::Dataset { id }) = self.replayed(principal, m, &fp)? {
            return Ok(id);
        }
        if items.is_empty() {
            return Err(RegistryError::EmptyDataset);
        }
        if items.keys().any(String::is_empty) {
            return Err(RegistryError::EmptyExampleId);
        }
        let id = match requested_id {
            Some(id) if self.datasets.contains_key(&id) => return Err(RegistryError::Immutable(id)),
            Some(id) => id,
            None => self.next_dataset_id(),
        };
        let dataset = LabeledDataset::new(id, items, sealed, principal.role, now_ms);
        let event = Event::RegisterDataset {
            dataset: StoredDataset::from_dataset(&dataset),
        };
        match self.commit(principal, now_ms, m, fp, event)? {
            Outcome::Dataset { id } => Ok(id),
            other => unreachable!("register produced {other:?}"),
        }
    }

    pub fn create_session(
        &mut self,
        principal: &Principal,
        spec: MeterSpec,
        val: DatasetId,
        test: DatasetId,
        now_ms: u64,
        m: &Mutation,
    ) -> Result<SessionSummary> {
        let fp = fingerprint("create_session", &(&spec, &val, &test));
        if let Some(Outcome::Session { summary }) = self.replayed(principal, m, &fp)? {
            return Ok(view_summary(*summary, principal.role));
        }
        let event = Event::CreateSession {
            session: self.next_session_id(),
            spec,
            val,
            test,
        };
        match self.commit(principal, now_ms, m, fp, event)? {
            Outcome::Session { summary } => Ok(view_summary(*summary, principal.role)),
            other => unreachable!("create produced {other:?}"),
        }
    }

    pub fn submit(
        &mut self,
        principal: &Principal,
        session: &SessionId,
        predictions: LabelMap,
        now_ms: u64,
        m: &Mutation,
    ) -> Result<SignalReport> {
        let fp = fingerprint("submit", &(session, &predictions));
        let event = Event::Submit {
            session: session.clone(),
            predictions,
        };
        self.session_mutation(principal, session, now_ms, m, fp, event)
            .map(|o| outcome_report(o, principal.role))
    }

    pub fn revert(&mut self, principal: &Principal, session: &SessionId, now_ms: u64, m: &Mutation) -> Result<SignalReport> {
        let fp = fingerprint("revert", session);
        let event = Event::Revert { session: session.clone() };
        self.session_mutation(principal, session, now_ms, m, fp, event)
            .map(|o| outcome_report(o, principal.role))
    }

    pub fn handoff(&mut self, principal: &Principal, session: &SessionId, now_ms: u64, m: &Mutation) -> Result<SignalReport> {
        let fp = fingerprint("handoff", session);
        let event = Event::Handoff { session: session.clone() };
        self.session_mutation(principal, session, now_ms, m, fp, event)
            .map(|o| outcome_report(o, principal.role))
    }

    /// Swap in a new sealed test set; the retired one is unsealed.
    pub fn rotate(
        &mut self,
        principal: &Principal,
        session: &SessionId,
        test: DatasetId,
        now_ms: u64,
        m: &Mutation,
    ) -> Result<(DatasetId, SignalReport)> {
        let fp = fingerprint("rotate", &(session, &test));
        let event = Event::Rotate {
            session: session.clone(),
            test,
        };
        match self.session_mutation(principal, session, now_ms, m, fp, event)? {
            Outcome::Rotated { retired, report } => Ok((retired, view_report(*report, principal.role))),
            other => unreachable!("rotate produced {other:?}"),
        }
    }

    pub fn close(&mut self, principal: &Principal, session: &SessionId, now_ms: u64, m: &Mutation) -> Result<SignalReport> {
        let fp = fingerprint("close", session);
        let event = Event::Close { session: session.clone() };
        self.session_mutation(principal, session, now_ms, m, fp, event)
            .map(|o| outcome_report(o, principal.role))
    }

    fn session_mutation(
        &mut self,
        principal: &Principal,
        session: &SessionId,
        now_ms: u64,
        m: &Mutation,
        fp: String,
        event: Event,
    ) -> Result<Outcome> {
        if let Some(done) = self.replayed(principal, m, &fp)? {
            return Ok(done);
        }
        let actual = self.session(session)?.seq();
        if let Some(expected) = m.expected_seq {
            if expected != actual {
                return Err(RegistryError::Conflict { expected, actual });
            }
        }
        self.commit(principal, now_ms, m, fp, event)
    }

    /// Stored outcome for a retried idempotency key.
    fn replayed(&self, principal: &Principal, m: &Mutation, fp: &str) -> Result<Option<Outcome>> {
        let Some(key) = &m.idempotency_key else {
            return Ok(None);
        };
        match self.idempotency.get(&(principal.name.clone(), key.clone())) {
            Some(entry) if entry.fingerprint == fp => Ok(Some(entry.outcome.clone())),
            Some(_) => Err(RegistryError::IdempotencyMismatch(key.clone())),
            None => Ok(None),
        }
    }

    /// Validate `event` against a scratch copy of the touched state, log it,
    /// then install the result.
    fn commit(&mut self, principal: &Principal, now_ms: u64, m: &Mutation, fp: String, event: Event) -> Result<Outcome> {
        let record = LogRecord {
            record: self.log_len,
            at_ms: now_ms,
            principal: principal.name.clone(),
            role: principal.role,
            idempotency: m.idempotency_key.clone().map(|key| IdempotencyTag { key, fingerprint: fp }),
            event,
        };
        let staged = self.stage(&record)?;
        if let Some(store) = &mut self.store {
            store.append(&record)?;
        }
        let outcome = self.install(&record, staged);
        if let Some(store) = &self.store {
            if self.log_len % self.snapshot_every == 0 {
                store.write_snapshot(&self.snapshot())?;
            }
        }
        Ok(outcome)
    }

    /// Replay path: same validation and installation, no logging.
    fn apply(&mut self, record: &LogRecord) -> Result<Outcome> {
        if record.record != self.log_len {
            return Err(StoreError::Corrupt {
                record: record.record,
                line: record.record as usize + 1,
                offset: 0,
                reason: format!("expected record {}", self.log_len),
            }
            .into());
        }
        let staged = self.stage(record)?;
        Ok(self.install(record, staged))
    }

    fn next_dataset_id(&self) -> DatasetId {
        DatasetId(format!("ds-{:06}", self.log_len + 1))
    }

    fn next_session_id(&self) -> SessionId {
        SessionId(format!("ses-{:06}", self.log_len + 1))
    }

    /// Compute the effect of `record` without changing anything.
    fn stage(&self, record: &LogRecord) -> Result<Staged> {
        let actor = Principal::new(record.principal.clone(), record.role, "");
        match &record.event {
            Event::RegisterDataset { dataset } => {
                if dataset.sealed && !record.role.reads_sealed() {
                    return Err(forbidden(&actor, "register sealed datasets"));
                }
                if self.datasets.contains_key(&dataset.id) {
                    return Err(RegistryError::Immutable(dataset.id.clone()));
                }
                let d = dataset.clone().into_dataset().map_err(|reason| StoreError::Corrupt {
                    record: record.record,
                    line: record.record as usize + 1,
                    offset: 0,
                    reason,
                })?;
                Ok(Staged::Dataset(d))
            }
            Event::CreateSession { session, spec, val, test } => {
                let val = self.dataset(val)?;
                let test = self.dataset(test)?;
                let s = Session::create(session.clone(), spec.clone(), val, test)?;
                Ok(Staged::Session(s, None))
            }
            Event::Submit { session, predictions } => {
                let mut s = self.session(session)?.clone();
                let val = self.dataset(s.val_ref())?;
                let test = self.dataset(s.test_ref())?;
                let report = s.submit(val, test, predictions, record.at_ms)?;
                Ok(Staged::Report(s, report))
            }
            Event::Revert { session } => {
                let mut s = self.session(session)?.clone();
                let report = s.revert()?;
                Ok(Staged::Report(s, report))
            }
            Event::Handoff { session } => {
                let mut s = self.session(session)?.clone();
                let report = s.handoff_tenant()?;
                Ok(Staged::Report(s, report))
            }
            Event::Rotate { session, test } => {
                let mut s = self.session(session)?.clone();
                let val = self.dataset(s.val_ref())?;
                let new_test = self.dataset(test)?;
                let retired = s.rotate_test_set(val, new_test)?;
                Ok(Staged::Session(s, Some(retired)))
            }
            Event::Close { session } => {
                let mut s = self.session(session)?.clone();
                let report = s.close()?;
                Ok(Staged::Report(s, report))
            }
        }
    }

    fn install(&mut self, record: &LogRecord, staged: Staged) -> Outcome {
        let outcome = match staged {
            Staged::Dataset(d) => {
                let id = d.id().clone();
                self.datasets.insert(id.clone(), d);
                Outcome::Dataset { id }
            }
            Staged::Session(s, retired) => {
                let outcome = match retired {
                    Some(retired) => {
                        if let Some(old) = self.datasets.get_mut(&retired) {
                            old.unseal();
                        }
                        Outcome::Rotated {
                            retired,
                            report: Box::new(s.report()),
                        }
                    }
                    None => Outcome::Session {
                        summary: Box::new(summarize(&s, Role::Admin)),
                    },
                };
                self.sessions.insert(s.id().clone(), s);
                outcome
            }
            Staged::Report(s, report) => {
                self.sessions.insert(s.id().clone(), s);
                Outcome::Report {
                    report: Box::new(report),
                }
            }
        };
        if let Some(tag) = &record.idempotency {
            self.idempotency.insert(
                (record.principal.clone(), tag.key.clone()),
                IdempotencyEntry {
                    principal: record.principal.clone(),
                    key: tag.key.clone(),
                    fingerprint: tag.fingerprint.clone(),
                    outcome: outcome.clone(),
                },
            );
        }
        self.log_len += 1;
        outcome
    }
}

enum Staged {
    Dataset(LabeledDataset),
    Session(Session, Option<DatasetId>),
    Report(Session, SignalReport),
}

fn view_report(report: SignalReport, role: Role) -> SignalReport {
    match role {
        Role::Developer => report.redacted(),
        Role::Labeler | Role::Admin => report,
    }
}

fn outcome_report(o: Outcome, role: Role) -> SignalReport {
    match o {
        Outcome::Report { report } => view_report(*report, role),
        other => unreachable!("expected a report, got {other:?}"),
    }
}

fn view_summary(mut summary: SessionSummary, role: Role) -> SessionSummary {
    summary.report = view_report(summary.report, role);
    summary
}

fn summarize(s: &Session, role: Role) -> SessionSummary {
    SessionSummary {
        id: s.id().clone(),
        spec: s.spec().clone(),
        plan: s.plan().clone(),
        val: s.val_ref().clone(),
        test: s.test_ref().clone(),
        state: s.state(),
        seq: s.seq(),
        retired_tests: s.archived().iter().map(|e| e.test_ref.clone()).collect(),
        report: view_report(s.report(), role),
    }
}

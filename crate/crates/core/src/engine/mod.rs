//! Metering sessions.
//!
//! A [`Session`] scores each submission against the sealed test set and the
//! open validation set with exact-match 0-1 loss, maps the empirical
//! overfitting `|val_loss - test_loss|` onto a signal band, and enforces the
//! submission, revert and tenant budgets the plan was sized for.
//!
//! Sessions are single-writer state machines; every mutation bumps `seq`.

mod report;

use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::planner::{self, MeterSpec, Mode, PlanError, PlanReport};
use crate::registry::{DatasetId, LabelMap, LabeledDataset};

pub use report::{ovft_interval, SignalReport, SubmissionRecord};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Active,
    Exhausted,
    Closed,
}

/// Broad class of an engine failure, for exit codes and status mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    State,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Spec(#[from] PlanError),
    #[error("test set too small: {required} labels required, {actual} supplied (deficit {deficit})")]
    UndersizedTestSet { required: u64, actual: u64, deficit: u64 },
    #[error("test set {0} is not sealed")]
    UnsealedTestSet(DatasetId),
    #[error("validation and test set must be different datasets")]
    SameDataset,
    #[error("validation and test sets share {0} example ids")]
    OverlappingIds(usize),
    #[error("predictions must cover every validation and test id exactly once: {missing} missing, {extra} unknown")]
    Coverage { missing: usize, extra: usize },
    #[error("dataset {got} is not the one bound to this session ({expected})")]
    WrongDataset { expected: DatasetId, got: DatasetId },
    #[error("submission budget exhausted; rotate in a new test set")]
    Exhausted,
    #[error("session is closed")]
    Closed,
    #[error("tenant {tenant} used its {budget} submissions; hand off to the next tenant")]
    TenantBudgetExhausted { tenant: usize, budget: u32 },
    #[error("no revert budget left")]
    NoRevertBudget,
    #[error("nothing to revert")]
    EmptyHistory,
    #[error("no further tenant to hand off to")]
    NoRemainingTenant,
    #[error("tenant has used {used} of {budget} submissions; hand-off only after the sub-budget is spent")]
    PrematureHandoff { used: u32, budget: u32 },
    #[error("test set can only be rotated once the submission budget is exhausted")]
    NotExhausted,
    #[error("dataset {0} was already used as a test set in this session")]
    IdentityReuse(DatasetId),
}

impl EngineError {
    pub fn class(&self) -> ErrorClass {
        use EngineError::*;
        match self {
            Spec(_) | UndersizedTestSet { .. } | UnsealedTestSet(_) | SameDataset | OverlappingIds(_)
            | Coverage { .. } | WrongDataset { .. } | IdentityReuse(_) => ErrorClass::Validation,
            Exhausted | Closed | TenantBudgetExhausted { .. } | NoRevertBudget | EmptyHistory | NoRemainingTenant
            | PrematureHandoff { .. } | NotExhausted => ErrorClass::State,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use EngineError::*;
        match self {
            Spec(_) => "invalid_spec",
            UndersizedTestSet { .. } => "undersized_test_set",
            UnsealedTestSet(_) => "unsealed_test_set",
            SameDataset => "same_dataset",
            OverlappingIds(_) => "overlapping_ids",
            Coverage { .. } => "prediction_coverage",
            WrongDataset { .. } => "wrong_dataset",
            Exhausted => "session_exhausted",
            Closed => "session_closed",
            TenantBudgetExhausted { .. } => "tenant_budget_exhausted",
            NoRevertBudget => "no_revert_budget",
            EmptyHistory => "empty_history",
            NoRemainingTenant => "no_remaining_tenant",
            PrematureHandoff { .. } => "premature_handoff",
            NotExhausted => "not_exhausted",
            IdentityReuse(_) => "test_set_reuse",
        }
    }
}

/// Records made against a test set that has since been rotated out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub test_ref: DatasetId,
    pub history: Vec<SubmissionRecord>,
    pub reverted: Vec<SubmissionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    id: SessionId,
    spec: MeterSpec,
    plan: PlanReport,
    val_ref: DatasetId,
    test_ref: DatasetId,
    history: Vec<SubmissionRecord>,
    reverted: Vec<SubmissionRecord>,
    archived: Vec<Epoch>,
    high_water: usize,
    remaining_submissions: u32,
    remaining_reverts: u32,
    tenant_cursor: usize,
    tenant_used: u32,
    /// Index into `history` where the current tenant's records begin.
    tenant_start: usize,
    state: SessionState,
    seq: u64,
}

/// 0-1 loss as the exact fraction `errors / n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Loss {
    pub(crate) errors: u64,
    pub(crate) n: u64,
}

impl Loss {
    fn of(dataset: &LabeledDataset, predictions: &LabelMap) -> Self {
        let errors = dataset
            .labels()
            .iter()
            .filter(|(id, label)| predictions.get(id.as_str()) != Some(label))
            .count() as u64;
        Self {
            errors,
            n: dataset.len() as u64,
        }
    }

    fn value(self) -> f64 {
        self.errors as f64 / self.n as f64
    }
}

/// `|a - b|` of two exact fractions, reduced and rounded once to `f64`.
fn abs_gap(a: Loss, b: Loss) -> f64 {
    let lhs = u128::from(a.errors) * u128::from(b.n);
    let rhs = u128::from(b.errors) * u128::from(a.n);
    let num = lhs.abs_diff(rhs);
    let den = u128::from(a.n) * u128::from(b.n);
    if num == 0 {
        return 0.0;
    }
    let g = num.gcd(&den);
    (num / g) as f64 / (den / g) as f64
}

/// SHA-256 over the sorted `id\tpred\n` listing.
pub fn prediction_digest(predictions: &LabelMap) -> String {
    let mut hasher = Sha256::new();
    for (id, pred) in predictions {
        hasher.update(id.as_bytes());
        hasher.update(b"\t");
        hasher.update(pred.to_string().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

fn check_test_set(plan: &PlanReport, val: &LabeledDataset, test: &LabeledDataset) -> Result<(), EngineError> {
    if val.id() == test.id() {
        return Err(EngineError::SameDataset);
    }
    if !test.sealed() {
        return Err(EngineError::UnsealedTestSet(test.id().clone()));
    }
    let actual = test.len() as u64;
    if actual < plan.required_size {
        return Err(EngineError::UndersizedTestSet {
            required: plan.required_size,
            actual,
            deficit: plan.required_size - actual,
        });
    }
    let (small, large) = if val.len() <= test.len() { (val, test) } else { (test, val) };
    let overlap = small.ids().filter(|id| large.contains(id)).count();
    if overlap > 0 {
        return Err(EngineError::OverlappingIds(overlap));
    }
    Ok(())
}

impl Session {
    /// Plan `spec` and open a session over the given datasets.
    pub fn create(
        id: SessionId,
        spec: MeterSpec,
        val: &LabeledDataset,
        test: &LabeledDataset,
    ) -> Result<Self, EngineError> {
        let plan = planner::plan(&spec)?;
        check_test_set(&plan, val, test)?;
        Ok(Self::open(id, spec, plan, val.id().clone(), test.id().clone()))
    }

    /// Session without dataset checks, for callers that score submissions
    /// themselves.
    pub(crate) fn open(id: SessionId, spec: MeterSpec, plan: PlanReport, val_ref: DatasetId, test_ref: DatasetId) -> Self {
        Self {
            id,
            remaining_submissions: spec.steps,
            remaining_reverts: spec.revert_budget(),
            spec,
            plan,
            val_ref,
            test_ref,
            history: Vec::new(),
            reverted: Vec::new(),
            archived: Vec::new(),
            high_water: 0,
            tenant_cursor: 0,
            tenant_used: 0,
            tenant_start: 0,
            state: SessionState::Active,
            seq: 0,
        }
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn spec(&self) -> &MeterSpec {
        &self.spec
    }

    pub fn plan(&self) -> &PlanReport {
        &self.plan
    }

    pub fn val_ref(&self) -> &DatasetId {
        &self.val_ref
    }

    pub fn test_ref(&self) -> &DatasetId {
        &self.test_ref
    }

    /// Retained (non-reverted) records against the current test set.
    pub fn history(&self) -> &[SubmissionRecord] {
        &self.history
    }

    pub fn reverted(&self) -> &[SubmissionRecord] {
        &self.reverted
    }

    pub fn archived(&self) -> &[Epoch] {
        &self.archived
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn remaining_submissions(&self) -> u32 {
        self.remaining_submissions
    }

    pub fn remaining_reverts(&self) -> u32 {
        self.remaining_reverts
    }

    pub fn tenant_cursor(&self) -> usize {
        self.tenant_cursor
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Submissions accepted against the current test set, reverted ones
    /// included.
    pub fn accepted(&self) -> u32 {
        self.spec.steps - self.remaining_submissions
    }

    fn ensure_open(&self) -> Result<(), EngineError> {
        match self.state {
            SessionState::Active => Ok(()),
            SessionState::Exhausted => Err(EngineError::Exhausted),
            SessionState::Closed => Err(EngineError::Closed),
        }
    }

    fn ensure_bound(&self, val: &LabeledDataset, test: &LabeledDataset) -> Result<(), EngineError> {
        for (expected, got) in [(&self.val_ref, val.id()), (&self.test_ref, test.id())] {
            if expected != got {
                return Err(EngineError::WrongDataset {
                    expected: expected.clone(),
                    got: got.clone(),
                });
            }
        }
        Ok(())
    }

    fn tenant_budget(&self) -> u32 {
        self.spec.tenancy[self.tenant_cursor]
    }

    fn recompute_high_water(&mut self) {
        self.high_water = self.history[self.tenant_start..]
            .iter()
            .map(|r| r.signal)
            .max()
            .unwrap_or(0);
    }

    /// Score a prediction file against both datasets.
    pub fn submit(
        &mut self,
        val: &LabeledDataset,
        test: &LabeledDataset,
        predictions: &LabelMap,
        now_ms: u64,
    ) -> Result<SignalReport, EngineError> {
        self.ensure_open()?;
        self.ensure_bound(val, test)?;
        let missing = val
            .ids()
            .chain(test.ids())
            .filter(|id| !predictions.contains_key(*id))
            .count();
        let covered = val.len() + test.len() - missing;
        let extra = predictions.len() - covered;
        if missing > 0 || extra > 0 {
            return Err(EngineError::Coverage { missing, extra });
        }

        let val_loss = Loss::of(val, predictions);
        let test_loss = Loss::of(test, predictions);
        self.submit_scored(val_loss, test_loss, prediction_digest(predictions), now_ms)
    }

    /// Record a submission whose losses are already counted.
    pub(crate) fn submit_scored(
        &mut self,
        val_loss: Loss,
        test_loss: Loss,
        digest: String,
        now_ms: u64,
    ) -> Result<SignalReport, EngineError> {
        self.ensure_open()?;
        if self.tenant_used >= self.tenant_budget() {
            return Err(EngineError::TenantBudgetExhausted {
                tenant: self.tenant_cursor,
                budget: self.tenant_budget(),
            });
        }
        let gap = abs_gap(val_loss, test_loss);
        let signal = self.spec.band_index(gap);

        self.remaining_submissions -= 1;
        self.tenant_used += 1;
        self.history.push(SubmissionRecord {
            step: self.accepted(),
            tenant: self.tenant_cursor,
            digest,
            val_loss: val_loss.value(),
            test_loss: test_loss.value(),
            empirical_overfitting: gap,
            signal,
            timestamp_ms: now_ms,
        });
        self.high_water = self.high_water.max(signal);
        if self.remaining_submissions == 0 {
            self.state = SessionState::Exhausted;
        }
        self.seq += 1;
        Ok(self.report())
    }

    /// Drop the latest retained submission. Its slot is not refunded.
    pub fn revert(&mut self) -> Result<SignalReport, EngineError> {
        self.ensure_open()?;
        if self.remaining_reverts == 0 {
            return Err(EngineError::NoRevertBudget);
        }
        if self.history.len() <= self.tenant_start {
            return Err(EngineError::EmptyHistory);
        }
        let popped = self.history.pop().expect("history is nonempty");
        self.reverted.push(popped);
        self.remaining_reverts -= 1;
        self.recompute_high_water();
        self.seq += 1;
        Ok(self.report())
    }

    /// Pass the session to the next tenant once the current one has spent
    /// its sub-budget.
    pub fn handoff_tenant(&mut self) -> Result<SignalReport, EngineError> {
        if self.state == SessionState::Closed {
            return Err(EngineError::Closed);
        }
        if self.tenant_cursor + 1 >= self.spec.tenancy.len() {
            return Err(EngineError::NoRemainingTenant);
        }
        if self.tenant_used < self.tenant_budget() {
            return Err(EngineError::PrematureHandoff {
                used: self.tenant_used,
                budget: self.tenant_budget(),
            });
        }
        self.tenant_cursor += 1;
        self.tenant_used = 0;
        self.tenant_start = self.history.len();
        if self.spec.mode == Mode::Incremental {
            self.high_water = 0;
        }
        self.seq += 1;
        Ok(self.report())
    }

    /// Replace an exhausted test set with a fresh sealed one and restore the
    /// full budgets. Returns the id of the retired test set, which the caller
    /// releases to developers.
    pub fn rotate_test_set(&mut self, val: &LabeledDataset, new_test: &LabeledDataset) -> Result<DatasetId, EngineError> {
        match self.state {
            SessionState::Exhausted => {}
            SessionState::Active => return Err(EngineError::NotExhausted),
            SessionState::Closed => return Err(EngineError::Closed),
        }
        if val.id() != &self.val_ref {
            return Err(EngineError::WrongDataset {
                expected: self.val_ref.clone(),
                got: val.id().clone(),
            });
        }
        let reused = new_test.id() == &self.test_ref || self.archived.iter().any(|e| &e.test_ref == new_test.id());
        if reused {
            return Err(EngineError::IdentityReuse(new_test.id().clone()));
        }
        check_test_set(&self.plan, val, new_test)?;

        let retired = std::mem::replace(&mut self.test_ref, new_test.id().clone());
        self.archived.push(Epoch {
            test_ref: retired.clone(),
            history: std::mem::take(&mut self.history),
            reverted: std::mem::take(&mut self.reverted),
        });
        self.remaining_submissions = self.spec.steps;
        self.remaining_reverts = self.spec.revert_budget();
        self.tenant_cursor = 0;
        self.tenant_used = 0;
        self.tenant_start = 0;
        self.high_water = 0;
        self.state = SessionState::Active;
        self.seq += 1;
        Ok(retired)
    }

    pub fn close(&mut self) -> Result<SignalReport, EngineError> {
        if self.state == SessionState::Closed {
            return Err(EngineError::Closed);
        }
        self.state = SessionState::Closed;
        self.seq += 1;
        Ok(self.report())
    }

    /// Report for the current state.
    pub fn report(&self) -> SignalReport {
        let last = self.history[self.tenant_start..].last();
        let signal = match self.spec.mode {
            Mode::Regular => last.map(|r| r.signal),
            Mode::Incremental => None,
        };
        let displayed = match self.spec.mode {
            Mode::Regular => signal,
            Mode::Incremental => (self.high_water > 0).then_some(self.high_water),
        };
        let band = displayed.map(|k| self.spec.bands[k - 1]);
        let epsilon_bound = displayed.map(|k| self.spec.epsilons.get(k));
        SignalReport {
            session: self.id.clone(),
            seq: self.seq,
            mode: self.spec.mode,
            step: self.accepted(),
            tenant: self.tenant_cursor,
            signal,
            incremental_signal: self.high_water,
            band,
            epsilon_bound,
            delta: self.spec.delta,
            empirical_overfitting: last.map(|r| r.empirical_overfitting),
            derived_ovft_interval: band.zip(epsilon_bound).map(|(b, e)| ovft_interval(b, e)),
            remaining_submissions: self.remaining_submissions,
            remaining_reverts: self.remaining_reverts,
            state: self.state,
        }
    }
}

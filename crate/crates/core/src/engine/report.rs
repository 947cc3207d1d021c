use serde::{Deserialize, Serialize};

use crate::planner::{Band, Mode};

use super::{SessionId, SessionState};

/// One accepted submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    /// 1-based index among submissions accepted against the current test set.
    pub step: u32,
    pub tenant: usize,
    /// SHA-256 of the canonical prediction listing.
    pub digest: String,
    pub val_loss: f64,
    pub test_loss: f64,
    pub empirical_overfitting: f64,
    /// Raw band index I_t.
    pub signal: usize,
    pub timestamp_ms: u64,
}

/// What the meter answers after each state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub session: SessionId,
    /// Event-sequence number of the session after this change.
    pub seq: u64,
    pub mode: Mode,
    /// Submissions accepted against the current test set.
    pub step: u32,
    pub tenant: usize,
    /// Raw band of the latest retained submission; never set in incremental
    /// mode.
    pub signal: Option<usize>,
    /// Running maximum band over the retained history, 0 before the first
    /// submission.
    pub incremental_signal: usize,
    /// Band of the displayed signal.
    pub band: Option<Band>,
    pub epsilon_bound: Option<f64>,
    pub delta: f64,
    /// Raw |val_loss - test_loss|; stripped by [`SignalReport::redacted`].
    pub empirical_overfitting: Option<f64>,
    /// `[max(0, lower - eps), upper + eps]` for the displayed band.
    pub derived_ovft_interval: Option<(f64, f64)>,
    pub remaining_submissions: u32,
    pub remaining_reverts: u32,
    pub state: SessionState,
}

impl SignalReport {
    /// The displayed signal: raw band in regular mode, running max otherwise.
    pub fn displayed_signal(&self) -> Option<usize> {
        match self.mode {
            Mode::Regular => self.signal,
            Mode::Incremental => (self.incremental_signal > 0).then_some(self.incremental_signal),
        }
    }

    /// Developer-facing copy: the raw overfitting value carries more than the
    /// m-ary signal, so it is dropped.
    pub fn redacted(&self) -> Self {
        Self {
            empirical_overfitting: None,
            ..self.clone()
        }
    }
}

/// `[max(0, lower - eps), upper + eps]`.
pub fn ovft_interval(band: Band, epsilon: f64) -> (f64, f64) {
    ((band.lower - epsilon).max(0.0), band.upper + epsilon)
}

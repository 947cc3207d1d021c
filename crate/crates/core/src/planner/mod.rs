//! Test-set size planning.
//!
//! Counts the possible submissions an adaptive developer can make under each
//! meter variant (regular, incremental, with reverts, split across tenants),
//! then finds the smallest test set whose Hoeffding-plus-union-bound failure
//! probability is strictly below `delta`.
//!
//! Counts are exact big integers; the failure mass is evaluated in log space
//! so that trees with thousands of digits never overflow.

mod counts;
mod solve;
mod spec;

use thiserror::Error;

pub use counts::{
    binomial, count_incremental, count_multitenant, count_regular, count_time_travel, ln_biguint,
    ln_incremental_per_signal, ln_regular_per_signal, shifted_revert_steps, SubmissionCounts,
};
pub use solve::{
    counts_for, log_survival, plan, size_independent, size_resampling, size_single, solve_size, Baselines,
    PlanReport,
};
pub use spec::{bands_from_cuts, equal_width_bands, Band, EpsilonSchedule, MeterSpec, Mode};


#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{param}={value} is out of range, expected {expected}")]
    OutOfRange {
        param: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("invalid {field}: {reason}")]
    Constraint { field: &'static str, reason: String },
    #[error("incompatible options: {0}")]
    IncompatibleOptions(String),
    #[error("{counts} submission counts but {epsilons} tolerances")]
    LengthMismatch { counts: usize, epsilons: usize },
}

impl PlanError {
    pub(crate) fn constraint(field: &'static str, reason: impl Into<String>) -> Self {
        PlanError::Constraint {
            field,
            reason: reason.into(),
        }
    }

    /// Name of the violated parameter, for machine-readable error payloads.
    pub fn field(&self) -> &'static str {
        match self {
            PlanError::OutOfRange { param, .. } => param,
            PlanError::Constraint { field, .. } => field,
            PlanError::IncompatibleOptions(_) => "tenancy",
            PlanError::LengthMismatch { .. } => "epsilons",
        }
    }
}

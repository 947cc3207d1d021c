use serde::{Deserialize, Serialize};

use super::counts::{self, SubmissionCounts};
use super::{EpsilonSchedule, MeterSpec, PlanError};

fn check_epsilon(epsilon: f64) -> Result<(), PlanError> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(PlanError::OutOfRange {
            param: "epsilon",
            value: epsilon,
            expected: "(0, 1]",
        })
    }
}

fn check_delta(delta: f64) -> Result<(), PlanError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(PlanError::OutOfRange {
            param: "delta",
            value: delta,
            expected: "(0, 1)",
        })
    }
}

/// Least n with `2 * count * exp(-2 n eps^2) < delta`, from the closed form.
fn closed_form_size(ln_count: f64, epsilon: f64, delta: f64) -> u64 {
    let threshold = (std::f64::consts::LN_2 + ln_count - delta.ln()) / (2.0 * epsilon * epsilon);
    if threshold < 0.0 {
        0
    } else {
        threshold.floor() as u64 + 1
    }
}

/// Test-set size for a single submission.
pub fn size_single(epsilon: f64, delta: f64) -> Result<u64, PlanError> {
    size_independent(epsilon, delta, 1)
}

/// Test-set size for `steps` submissions chosen without looking at any
/// signal.
pub fn size_independent(epsilon: f64, delta: f64, steps: u32) -> Result<u64, PlanError> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    if steps == 0 {
        return Err(PlanError::constraint("T", "development-cycle length must be at least 1"));
    }
    Ok(closed_form_size(f64::from(steps).ln(), epsilon, delta))
}

/// Total labels when every submission gets a fresh test set.
pub fn size_resampling(epsilon: f64, delta: f64, steps: u32) -> Result<u64, PlanError> {
    Ok(u64::from(steps) * size_independent(epsilon, delta, steps)?)
}

/// ln of the union-bound failure mass `sum_k 2 C_k exp(-2 n eps_k^2)`.
pub fn log_survival(n: u64, counts: &SubmissionCounts, schedule: &EpsilonSchedule) -> Result<f64, PlanError> {
    if counts.len() != schedule.len() {
        return Err(PlanError::LengthMismatch {
            counts: counts.len(),
            epsilons: schedule.len(),
        });
    }
    Ok(log_survival_ln(n as f64, &counts.ln_per_signal(), schedule.as_slice()))
}

fn log_survival_ln(n: f64, ln_counts: &[f64], epsilons: &[f64]) -> f64 {
    let terms: Vec<f64> = ln_counts
        .iter()
        .zip(epsilons)
        .filter(|(c, _)| c.is_finite())
        .map(|(c, e)| std::f64::consts::LN_2 + c - 2.0 * n * e * e)
        .collect();
    let Some(max) = terms.iter().copied().reduce(f64::max) else {
        return f64::NEG_INFINITY;
    };
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Reference sizes for the same (eps_1, delta, T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baselines {
    pub single: u64,
    pub independent: u64,
    pub resampling: u64,
}

impl Baselines {
    pub fn compute(epsilon: f64, delta: f64, steps: u32) -> Result<Self, PlanError> {
        Ok(Self {
            single: size_single(epsilon, delta)?,
            independent: size_independent(epsilon, delta, steps)?,
            resampling: size_resampling(epsilon, delta, steps)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    /// Minimal number of sealed test labels.
    pub required_size: u64,
    pub counts: SubmissionCounts,
    pub log_survival_at_n: f64,
    /// Survival one label short of the answer; never below `ln_delta`.
    pub log_survival_below_n: f64,
    pub ln_delta: f64,
    pub baselines: Option<Baselines>,
}

/// Least n whose union-bound failure mass is strictly below `delta`.
///
/// The bracket starts from the size the eps_1 term alone would need, with a
/// factor-2 slack, and doubles until the predicate holds.
pub fn solve_size(counts: &SubmissionCounts, schedule: &EpsilonSchedule, delta: f64) -> Result<PlanReport, PlanError> {
    check_delta(delta)?;
    if counts.len() != schedule.len() {
        return Err(PlanError::LengthMismatch {
            counts: counts.len(),
            epsilons: schedule.len(),
        });
    }
    let ln_counts = counts.ln_per_signal();
    let epsilons = schedule.as_slice();
    let ln_delta = delta.ln();
    let holds = |n: u64| log_survival_ln(n as f64, &ln_counts, epsilons) < ln_delta;

    let dominant = ln_counts
        .iter()
        .zip(epsilons)
        .find(|(c, _)| c.is_finite())
        .map(|(&c, &e)| closed_form_size(c, e, delta))
        .unwrap_or(1);
    let mut upper = dominant.saturating_mul(2).max(1);
    while !holds(upper) {
        upper = upper.saturating_mul(2);
    }

    // invariant: holds(upper), !holds(lower) (n = 0 never holds for delta < 1)
    let mut lower = 0u64;
    while upper - lower > 1 {
        let mid = lower + (upper - lower) / 2;
        if holds(mid) {
            upper = mid;
        } else {
            lower = mid;
        }
    }

    Ok(PlanReport {
        required_size: upper,
        counts: counts.clone(),
        log_survival_at_n: log_survival_ln(upper as f64, &ln_counts, epsilons),
        log_survival_below_n: log_survival_ln((upper - 1) as f64, &ln_counts, epsilons),
        ln_delta,
        baselines: None,
    })
}

/// Submission counts for a full meter spec.
pub fn counts_for(spec: &MeterSpec) -> Result<SubmissionCounts, PlanError> {
    spec.validate()?;
    let m = spec.m();
    if spec.tenancy.len() > 1 {
        counts::count_multitenant(m, &spec.tenancy, spec.mode, spec.conservative_multitenant)
    } else if !spec.revert_steps.is_empty() {
        counts::count_time_travel(m, spec.steps, &spec.revert_steps, spec.mode)
    } else {
        counts::count_multitenant(m, &[spec.steps], spec.mode, spec.conservative_multitenant)
    }
}

/// Required test-set size and audit data for a meter spec.
pub fn plan(spec: &MeterSpec) -> Result<PlanReport, PlanError> {
    let counts = counts_for(spec)?;
    let mut report = solve_size(&counts, &spec.epsilons, spec.delta)?;
    report.baselines = Some(Baselines::compute(spec.epsilons.first(), spec.delta, spec.steps)?);
    Ok(report)
}

//! Exact sizes of the submission dependency tree, split by the signal value
//! carried by each node.
//!
//! Every node of the tree is a possible submission; the union bound charges
//! each node the Hoeffding tail of its own signal's tolerance, so the planner
//! needs one count per signal rather than a single total.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::{Mode, PlanError};

/// Per-signal submission counts C_1..C_m in exact arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionCounts {
    per_signal: Vec<BigUint>,
}

impl SubmissionCounts {
    pub fn new(per_signal: Vec<BigUint>) -> Self {
        Self { per_signal }
    }

    pub fn per_signal(&self) -> &[BigUint] {
        &self.per_signal
    }

    /// Count for the 1-based signal `k`.
    pub fn get(&self, k: usize) -> &BigUint {
        &self.per_signal[k - 1]
    }

    pub fn len(&self) -> usize {
        self.per_signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_signal.is_empty()
    }

    pub fn total(&self) -> BigUint {
        self.per_signal.iter().sum()
    }

    /// Natural log of each count; `-inf` for zero counts.
    pub fn ln_per_signal(&self) -> Vec<f64> {
        self.per_signal.iter().map(ln_biguint).collect()
    }

    fn scale(mut self, factor: u64) -> Self {
        for c in &mut self.per_signal {
            *c *= factor;
        }
        self
    }
}

impl fmt::Display for SubmissionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.per_signal.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "] (total {})", self.total())
    }
}

#[derive(Serialize, Deserialize)]
struct CountsWire {
    per_signal: Vec<String>,
    total: String,
}

impl Serialize for SubmissionCounts {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CountsWire {
            per_signal: self.per_signal.iter().map(|c| c.to_string()).collect(),
            total: self.total().to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SubmissionCounts {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = CountsWire::deserialize(deserializer)?;
        let per_signal = wire
            .per_signal
            .iter()
            .map(|s| s.parse::<BigUint>().map_err(D::Error::custom))
            .collect::<Result<Vec<_>, _>>()?;
        let counts = SubmissionCounts::new(per_signal);
        let total: BigUint = wire.total.parse().map_err(D::Error::custom)?;
        if total != counts.total() {
            return Err(D::Error::custom("total does not equal the sum of per-signal counts"));
        }
        Ok(counts)
    }
}

/// ln(x) for an arbitrary-precision integer, without overflow.
pub fn ln_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 64 {
        let v = x.iter_u64_digits().next().unwrap_or(0);
        return (v as f64).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).iter_u64_digits().next().unwrap_or(0);
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

/// Exact binomial coefficient C(n, k).
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1) at this point
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

fn check_dims(m: usize, steps: u32) -> Result<(), PlanError> {
    if m == 0 {
        return Err(PlanError::constraint("m", "signal count must be positive"));
    }
    if steps == 0 {
        return Err(PlanError::constraint("T", "development-cycle length must be at least 1"));
    }
    Ok(())
}

/// (m^T - 1)/(m - 1): nodes per signal in the full m-ary tree of depth T,
/// and T for the single-signal chain.
fn regular_per_signal(m: usize, steps: u32) -> BigUint {
    if m == 1 {
        return BigUint::from(steps);
    }
    let base = BigUint::from(m);
    (base.pow(steps) - 1u32) / (m - 1)
}

/// C(k+T-1, k): nodes carrying signal k in the nondecreasing tree of depth T.
fn incremental_per_signal(k: usize, steps: u32) -> BigUint {
    binomial(k as u64 + u64::from(steps) - 1, k as u64)
}

fn per_signal_for(mode: Mode, m: usize, steps: u32) -> Vec<BigUint> {
    match mode {
        Mode::Regular => vec![regular_per_signal(m, steps); m],
        Mode::Incremental => (1..=m).map(|k| incremental_per_signal(k, steps)).collect(),
    }
}

/// Regular meter: every signal owns (m^T - 1)/(m - 1) nodes.
pub fn count_regular(m: usize, steps: u32) -> Result<SubmissionCounts, PlanError> {
    check_dims(m, steps)?;
    Ok(SubmissionCounts::new(per_signal_for(Mode::Regular, m, steps)))
}

/// Incremental meter: signal k owns C(k+T-1, k) nodes.
pub fn count_incremental(m: usize, steps: u32) -> Result<SubmissionCounts, PlanError> {
    check_dims(m, steps)?;
    Ok(SubmissionCounts::new(per_signal_for(Mode::Incremental, m, steps)))
}

/// Revert steps shifted for the time lost to earlier reverts:
/// t'_i = t_i - (i - 1).
pub fn shifted_revert_steps(steps: u32, reverts: &[u32]) -> Result<Vec<u32>, PlanError> {
    let budget = reverts.len() as u64;
    if !reverts.is_empty() && budget >= u64::from(steps) {
        return Err(PlanError::constraint(
            "revert_steps",
            format!("revert budget B={budget} must be smaller than T={steps}"),
        ));
    }
    let mut shifted = Vec::with_capacity(reverts.len());
    for (i, &t) in reverts.iter().enumerate() {
        if t == 0 || t > steps {
            return Err(PlanError::constraint(
                "revert_steps",
                format!("revert step t_{}={t} is outside [1, {steps}]", i + 1),
            ));
        }
        if i > 0 && t < reverts[i - 1] {
            return Err(PlanError::constraint("revert_steps", "revert steps must be nondecreasing"));
        }
        let shifted_t = i64::from(t) - i as i64;
        if shifted_t < 1 {
            return Err(PlanError::constraint(
                "revert_steps",
                format!("shifted revert step t'_{} = {shifted_t} is below 1", i + 1),
            ));
        }
        shifted.push(shifted_t as u32);
    }
    Ok(shifted)
}

/// Counts when the developer reverts the latest submission at the planned
/// steps. The final phase is a full tree of depth T - B, and every revert
/// adds the level of the tree it discarded.
pub fn count_time_travel(m: usize, steps: u32, reverts: &[u32], mode: Mode) -> Result<SubmissionCounts, PlanError> {
    check_dims(m, steps)?;
    let shifted = shifted_revert_steps(steps, reverts)?;
    let final_depth = steps - reverts.len() as u32;
    let mut per_signal = per_signal_for(mode, m, final_depth);
    for &t in &shifted {
        for (idx, count) in per_signal.iter_mut().enumerate() {
            let k = idx + 1;
            *count += match mode {
                Mode::Regular => BigUint::from(m).pow(t - 1),
                Mode::Incremental => binomial(k as u64 + u64::from(t) - 2, k as u64 - 1),
            };
        }
    }
    Ok(SubmissionCounts::new(per_signal))
}

/// Counts for tenants that each start from a clean history and make T_i
/// submissions. With `conservative` set, regular-mode counts carry an extra
/// factor m.
pub fn count_multitenant(
    m: usize,
    tenancy: &[u32],
    mode: Mode,
    conservative: bool,
) -> Result<SubmissionCounts, PlanError> {
    if tenancy.is_empty() {
        return Err(PlanError::constraint("tenancy", "at least one tenant is required"));
    }
    let mut per_signal = vec![BigUint::zero(); m];
    for &tenant_steps in tenancy {
        check_dims(m, tenant_steps)?;
        for (acc, c) in per_signal.iter_mut().zip(per_signal_for(mode, m, tenant_steps)) {
            *acc += c;
        }
    }
    let counts = SubmissionCounts::new(per_signal);
    Ok(if conservative && mode == Mode::Regular {
        counts.scale(m as u64)
    } else {
        counts
    })
}

/// ln of the regular per-signal count, evaluated directly in log space.
pub fn ln_regular_per_signal(m: usize, steps: u32) -> f64 {
    if m == 1 {
        return f64::from(steps).ln();
    }
    let ln_m = (m as f64).ln();
    let t = f64::from(steps);
    // ln(m^T - 1) = T ln m + ln(1 - m^-T)
    t * ln_m + (-(-t * ln_m).exp()).ln_1p() - ((m - 1) as f64).ln()
}

/// ln C(k+T-1, k) as a sum of logs.
pub fn ln_incremental_per_signal(k: usize, steps: u32) -> f64 {
    let n = k as u64 + u64::from(steps) - 1;
    let kk = (k as u64).min(n - k as u64);
    (0..kk).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

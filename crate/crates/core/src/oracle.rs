//! Brute-force enumeration of submission dependency trees.
//!
//! Walks every reachable developer state step by step and records each
//! distinct submission node, keyed by the developer's visible state after the
//! submission. Nothing here uses a closed form, so the tallies serve as
//! ground truth for [`crate::planner`]'s counting formulas at small (m, T).
//!
//! A node is identified by `(reverts so far, tenant, retained signals)`. A
//! revert pops the latest retained signal; a tenant handoff clears the
//! retained signals. In incremental mode the retained signals are the
//! reported running maxima, so they are nondecreasing.

use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::planner::Mode;

/// Largest `m^T` the enumerator accepts.
pub const STATE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("m^T = {m}^{steps} exceeds the enumeration cap of {cap} states")]
    CapExceeded { m: usize, steps: u32, cap: u64 },
    #[error("invalid enumeration request: {0}")]
    Invalid(String),
}

/// A submission node of the dependency tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HistoryNode {
    reverts: u32,
    tenant: u32,
    /// Signals visible to the developer, ending with this node's signal.
    path: Vec<u8>,
}

impl HistoryNode {
    /// Depth t within the current tenant's retained history.
    pub fn depth(&self) -> usize {
        self.path.len()
    }

    /// Signal value k carried by this node.
    pub fn signal(&self) -> usize {
        *self.path.last().expect("nodes are never empty") as usize
    }

    pub fn path(&self) -> &[u8] {
        &self.path
    }
}

/// Node tallies h(k, t) indexed by signal k and depth t.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Enumeration {
    pub m: usize,
    pub steps: u32,
    pub mode: Mode,
    /// `tallies[k - 1][t - 1]` = number of nodes with signal k at depth t.
    pub tallies: Vec<Vec<u64>>,
    pub total: u64,
}

impl Enumeration {
    pub fn h(&self, k: usize, t: usize) -> u64 {
        self.tallies[k - 1][t - 1]
    }

    /// Nodes per signal, summed over depth.
    pub fn per_signal(&self) -> Vec<u64> {
        self.tallies.iter().map(|row| row.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnumerationOptions<'a> {
    /// Steps at which the latest submission is reverted.
    pub reverts: Option<&'a [u32]>,
    /// Per-tenant step counts, consumed in order.
    pub tenancy: Option<&'a [u32]>,
}

/// Exhaustively enumerate the submission tree for `m` signals and `steps`
/// submissions.
pub fn enumerate(m: usize, steps: u32, mode: Mode, options: EnumerationOptions<'_>) -> Result<Enumeration, OracleError> {
    if m == 0 || steps == 0 {
        return Err(OracleError::Invalid("m and T must be positive".into()));
    }
    if m > u8::MAX as usize {
        return Err(OracleError::Invalid(format!("m={m} exceeds 255 signals")));
    }
    let within_cap = (m as u64)
        .checked_pow(steps)
        .map(|states| states <= STATE_CAP)
        .unwrap_or(false);
    if !within_cap {
        return Err(OracleError::CapExceeded {
            m,
            steps,
            cap: STATE_CAP,
        });
    }

    let reverts = options.reverts.unwrap_or(&[]);
    if reverts.iter().any(|&t| t == 0 || t > steps) {
        return Err(OracleError::Invalid(format!("revert steps must lie in [1, {steps}]")));
    }
    let tenancy: Vec<u32> = options.tenancy.map(<[u32]>::to_vec).unwrap_or_else(|| vec![steps]);
    if tenancy.iter().any(|&t| t == 0) || tenancy.iter().map(|&t| u64::from(t)).sum::<u64>() != u64::from(steps) {
        return Err(OracleError::Invalid(format!(
            "tenancy {tenancy:?} must be positive and sum to T={steps}"
        )));
    }
    // tenant owning each 1-based step
    let tenant_of_step: Vec<u32> = tenancy
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat(i as u32).take(n as usize))
        .collect();

    let mut tallies = vec![vec![0u64; steps as usize]; m];
    let mut seen: HashSet<HistoryNode> = HashSet::new();
    let mut frontier: HashSet<HistoryNode> = HashSet::new();
    // the empty retained history before the first submission
    let root = HistoryNode {
        reverts: 0,
        tenant: 0,
        path: Vec::new(),
    };
    frontier.insert(root);

    for step in 1..=steps {
        let tenant = tenant_of_step[(step - 1) as usize];
        let pops = reverts.iter().filter(|&&t| t == step).count();
        let mut next = HashSet::with_capacity(frontier.len() * m);
        for state in &frontier {
            let mut path = if state.tenant == tenant { state.path.clone() } else { Vec::new() };
            let floor = match mode {
                Mode::Regular => 1,
                Mode::Incremental => path.last().copied().unwrap_or(1) as usize,
            };
            // incremental: raw signals below the running max all report the max
            for reported in floor..=m {
                path.push(reported as u8);
                let node = HistoryNode {
                    reverts: state.reverts,
                    tenant,
                    path: path.clone(),
                };
                if !seen.contains(&node) {
                    tallies[reported - 1][path.len() - 1] += 1;
                    seen.insert(node.clone());
                }
                let mut after = node;
                if pops > 0 {
                    if after.path.len() < pops {
                        return Err(OracleError::Invalid(format!(
                            "revert at step {step} would pop past the start of the history"
                        )));
                    }
                    after.path.truncate(after.path.len() - pops);
                    after.reverts += pops as u32;
                }
                next.insert(after);
                path.pop();
            }
        }
        frontier = next;
    }

    let total = tallies.iter().flatten().sum();
    Ok(Enumeration {
        m,
        steps,
        mode,
        tallies,
        total,
    })
}

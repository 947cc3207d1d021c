//! Monte-Carlo check of the (ε, δ) guarantee.
//!
//! Each trial fixes a synthetic test set of `required_size` examples and lets
//! a simulated developer submit T models through a real [`Session`]. A model
//! is a per-example Bernoulli(p) loss pattern whose true expected loss is
//! exactly p, so the distributional overfitting |test_loss - p| is known. The
//! pattern is drawn from a generator keyed by (seed, trial, model), which
//! makes the test set a fixed holdout: resubmitting a model reproduces its
//! losses, and different models see independent patterns.
//!
//! The validation loss is p itself (measured on a very large set), so the
//! band each submission lands in is the band of its true deviation; that is
//! the most the meter can leak.

mod stats;
mod trace;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{EngineError, Loss, Session, SessionId};
use crate::planner::{self, MeterSpec, Mode, PlanError};
use crate::registry::DatasetId;

pub use stats::{clopper_pearson, Interval};
pub use trace::{replay_trace, RenderedTrace, TracePoint};

/// Largest `test_size * trials` the harness will sample.
pub const SAMPLE_CAP: u64 = 1_000_000_000;
/// Size of the notional validation set behind the exact validation loss.
const VAL_N: u64 = 1_000_000;
/// Cap on signal histories checked up front for a branching table.
const BRANCH_CHECK_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{samples} sampled losses exceed the cap of {cap}; lower the trial count or loosen the meter")]
    ScaleCap { samples: u128, cap: u64 },
    #[error("branching table has no entry for signal history `{0}`")]
    MissingBranch(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// How the simulated developer picks the next model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Fixed per-step true losses; signals are ignored. A profile shorter
    /// than T repeats its last entry.
    Oblivious { losses: Vec<f64> },
    /// True loss of the next model, keyed by the signals shown so far joined
    /// with `.` (the empty key is the first model). Every distinct history
    /// gets its own model.
    SignalBranching { table: BTreeMap<String, f64> },
    /// A fresh model of true loss `loss` at every node of the signal tree, so
    /// each trial walks one root-to-leaf path of the full dependency tree.
    /// 0.5 maximizes per-example variance.
    WorstCaseTree {
        #[serde(default = "half")]
        loss: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl AdversaryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryStrategy::Oblivious { .. } => "oblivious",
            AdversaryStrategy::SignalBranching { .. } => "signal_branching",
            AdversaryStrategy::WorstCaseTree { .. } => "worst_case_tree",
        }
    }

    /// (model key, true loss) of the next submission.
    fn choose(&self, step: u32, history: &str) -> Result<(String, f64), SimError> {
        match self {
            AdversaryStrategy::Oblivious { losses } => {
                let i = (step as usize - 1).min(losses.len() - 1);
                Ok((format!("step:{step}"), losses[i]))
            }
            AdversaryStrategy::SignalBranching { table } => table
                .get(history)
                .map(|&p| (format!("node:{history}"), p))
                .ok_or_else(|| SimError::MissingBranch(history.to_string())),
            AdversaryStrategy::WorstCaseTree { loss } => Ok((format!("node:{history}"), *loss)),
        }
    }

    fn validate(&self, spec: &MeterSpec) -> Result<(), SimError> {
        let check = |p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SimError::InvalidStrategy(format!("true loss {p} is outside [0, 1]")))
            }
        };
        match self {
            AdversaryStrategy::Oblivious { losses } => {
                if losses.is_empty() {
                    return Err(SimError::InvalidStrategy("oblivious profile is empty".into()));
                }
                losses.iter().try_for_each(|&p| check(p))
            }
            AdversaryStrategy::SignalBranching { table } => {
                table.values().try_for_each(|&p| check(p))?;
                match reachable_histories(spec) {
                    Some(histories) => histories
                        .into_iter()
                        .find(|h| !table.contains_key(h))
                        .map_or(Ok(()), |h| Err(SimError::MissingBranch(h))),
                    // too many to list; gaps surface during the run instead
                    None => Ok(()),
                }
            }
            AdversaryStrategy::WorstCaseTree { loss } => check(*loss),
        }
    }
}

/// Displayed-signal histories of length 0..T-1 a developer can observe, or
/// `None` past the check cap.
fn reachable_histories(spec: &MeterSpec) -> Option<Vec<String>> {
    let m = spec.m();
    // tenant owning each 0-based step
    let owner: Vec<usize> = spec
        .tenancy
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat(i).take(n as usize))
        .collect();
    let mut out = vec![String::new()];
    // (history key, signals, current tenant's high-water)
    let mut frontier: Vec<(String, usize)> = vec![(String::new(), 0)];
    for step in 0..spec.steps as usize - 1 {
        let mut next = Vec::new();
        for (key, high) in &frontier {
            let floor = match spec.mode {
                Mode::Regular => 1,
                Mode::Incremental => (*high).max(1),
            };
            for k in floor..=m {
                let child = if key.is_empty() { k.to_string() } else { format!("{key}.{k}") };
                // a tenant change at the next step forgets the high-water
                let high = if owner[step + 1] != owner[step] { 0 } else { k };
                next.push((child, high));
            }
        }
        out.extend(next.iter().map(|(k, _)| k.clone()));
        if out.len() > BRANCH_CHECK_CAP {
            return None;
        }
        frontier = next;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub trials: u64,
    pub seed: u64,
    /// Override the planned test-set size, e.g. to undersize on purpose.
    #[serde(default)]
    pub test_size: Option<u64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

impl SimulationConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            test_size: None,
            confidence: default_confidence(),
        }
    }
}

/// What happened in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Some step deviated by more than its signal's ε.
    pub violated: bool,
    pub max_deviation: f64,
    /// |test_loss - true loss| per step.
    pub deviations: Vec<f64>,
    /// ε of the displayed signal per step.
    pub epsilons: Vec<f64>,
    /// Displayed signal per step.
    pub signals: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub strategy: String,
    pub trials: u64,
    pub seed: u64,
    pub required_size: u64,
    pub test_size: u64,
    pub violations: u64,
    pub violation_rate: f64,
    pub interval: Interval,
    pub delta: f64,
    pub mean_max_deviation: f64,
    pub max_deviation: f64,
}

impl SimulationReport {
    /// Upper confidence bound on the violation rate is within δ.
    pub fn within_guarantee(&self) -> bool {
        self.interval.upper <= self.delta
    }
}

/// A prepared simulation; trials can be run individually or all at once.
#[derive(Debug, Clone)]
pub struct Simulation {
    spec: MeterSpec,
    strategy: AdversaryStrategy,
    config: SimulationConfig,
    required_size: u64,
    test_size: u64,
    template: Session,
}

impl Simulation {
    pub fn new(spec: MeterSpec, strategy: AdversaryStrategy, config: SimulationConfig) -> Result<Self, SimError> {
        let plan = planner::plan(&spec)?;
        if config.trials == 0 {
            return Err(SimError::InvalidStrategy("at least one trial is required".into()));
        }
        let test_size = config.test_size.unwrap_or(plan.required_size);
        if test_size == 0 {
            return Err(SimError::InvalidStrategy("test set must be nonempty".into()));
        }
        let samples = u128::from(test_size) * u128::from(config.trials);
        if samples > u128::from(SAMPLE_CAP) {
            return Err(SimError::ScaleCap { samples, cap: SAMPLE_CAP });
        }
        strategy.validate(&spec)?;
        let required_size = plan.required_size;
        let template = Session::open(
            SessionId("simulation".into()),
            spec.clone(),
            plan,
            DatasetId("sim-val".into()),
            DatasetId("sim-test".into()),
        );
        Ok(Self {
            spec,
            strategy,
            config,
            required_size,
            test_size,
            template,
        })
    }

    pub fn required_size(&self) -> u64 {
        self.required_size
    }

    pub fn test_size(&self) -> u64 {
        self.test_size
    }

    /// Errors of `model` on trial `trial`'s test set.
    fn test_errors(&self, trial: u64, model: &str, p: f64) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(trial.to_le_bytes());
        h.update(model.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        (0..self.test_size).filter(|_| rng.random::<f64>() < p).count() as u64
    }

    pub fn trial(&self, index: u64) -> Result<TrialOutcome, SimError> {
        let mut session = self.template.clone();
        let steps = self.spec.steps as usize;
        let mut outcome = TrialOutcome {
            violated: false,
            max_deviation: 0.0,
            deviations: Vec::with_capacity(steps),
            epsilons: Vec::with_capacity(steps),
            signals: Vec::with_capacity(steps),
        };
        let mut history = String::new();
        for step in 1..=self.spec.steps {
            let (model, p) = self.strategy.choose(step, &history)?;
            let errors = self.test_errors(index, &model, p);
            let val = Loss {
                errors: (p * VAL_N as f64).round() as u64,
                n: VAL_N,
            };
            let test = Loss {
                errors,
                n: self.test_size,
            };
            let report = match session.submit_scored(val, test, model.clone(), 0) {
                Err(EngineError::TenantBudgetExhausted { .. }) => {
                    session.handoff_tenant()?;
                    session.submit_scored(val, test, model, 0)?
                }
                other => other?,
            };
            let shown = report.displayed_signal().expect("a signal is shown after each submission");
            let eps = self.spec.epsilons.get(shown);
            let deviation = (errors as f64 / self.test_size as f64 - p).abs();
            outcome.violated |= deviation > eps;
            outcome.max_deviation = outcome.max_deviation.max(deviation);
            outcome.deviations.push(deviation);
            outcome.epsilons.push(eps);
            outcome.signals.push(shown);
            if !history.is_empty() {
                history.push('.');
            }
            history.push_str(&shown.to_string());
        }
        Ok(outcome)
    }

    pub fn run(&self) -> Result<SimulationReport, SimError> {
        let mut violations = 0;
        let mut sum_max = 0.0;
        let mut max_deviation: f64 = 0.0;
        for i in 0..self.config.trials {
            let t = self.trial(i)?;
            violations += u64::from(t.violated);
            sum_max += t.max_deviation;
            max_deviation = max_deviation.max(t.max_deviation);
        }
        let trials = self.config.trials;
        Ok(SimulationReport {
            strategy: self.strategy.name().to_string(),
            trials,
            seed: self.config.seed,
            required_size: self.required_size,
            test_size: self.test_size,
            violations,
            violation_rate: violations as f64 / trials as f64,
            interval: clopper_pearson(violations, trials, self.config.confidence),
            delta: self.spec.delta,
            mean_max_deviation: sum_max / trials as f64,
            max_deviation,
        })
    }
}

/// Run `config.trials` independent trials and summarize the violation rate.
pub fn run_trials(
    spec: &MeterSpec,
    strategy: &AdversaryStrategy,
    config: SimulationConfig,
) -> Result<SimulationReport, SimError> {
    Simulation::new(spec.clone(), strategy.clone(), config)?.run()
}

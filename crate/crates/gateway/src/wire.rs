//! Request and response bodies shared by the CLI and the HTTP API.

use holdmeter::engine::{EngineError, SessionId, SignalReport};
use holdmeter::oracle::OracleError;
use holdmeter::planner::{
    bands_from_cuts, equal_width_bands, Band, EpsilonSchedule, MeterSpec, Mode, PlanError, PlanReport,
};
use holdmeter::registry::{DatasetId, FailureKind, LabelMap, RegistryError, SessionSummary, UploadError};
use holdmeter::simulator::SimError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// A meter configuration as callers write it. Converted into a validated
/// [`MeterSpec`] by [`PlanRequest::into_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub mode: Mode,
    /// Number of signals; may be left out when `bands`, `cuts` or
    /// `epsilons` already fix it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Explicit `[lower, upper]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Vec<[f64; 2]>>,
    /// Interior cut points, an alternative to `bands`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<f64>>,
    /// One tolerance for every signal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Per-signal tolerances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    pub delta: f64,
    #[serde(rename = "T", alias = "steps")]
    pub steps: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tenancy: Option<Vec<u32>>,
    /// If given, must equal the number of `revert_steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revert_budget: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revert_steps: Vec<u32>,
    #[serde(default)]
    pub conservative_multitenant: bool,
}

fn constraint(field: &'static str, reason: impl Into<String>) -> PlanError {
    PlanError::Constraint {
        field,
        reason: reason.into(),
    }
}

impl PlanRequest {
    pub fn new(mode: Mode, m: usize, steps: u32, epsilon: f64, delta: f64) -> Self {
        Self {
            mode,
            m: Some(m),
            bands: None,
            cuts: None,
            epsilon: Some(epsilon),
            epsilons: None,
            delta,
            steps,
            tenancy: None,
            revert_budget: None,
            revert_steps: Vec::new(),
            conservative_multitenant: false,
        }
    }

    pub fn into_spec(self) -> Result<MeterSpec, PlanError> {
        if self.bands.is_some() && self.cuts.is_some() {
            return Err(constraint("bands", "give either bands or cuts, not both"));
        }
        let band_m = match (&self.bands, &self.cuts) {
            (Some(b), _) => Some(b.len()),
            (_, Some(c)) => Some(c.len() + 1),
            _ => None,
        };
        let eps_m = self.epsilons.as_ref().map(Vec::len);
        let mut m = self.m;
        for (source, other) in [("bands", band_m), ("epsilons", eps_m)] {
            match (m, other) {
                (Some(a), Some(b)) if a != b => {
                    return Err(constraint(source, format!("{source} imply m={b} but m={a} was given")));
                }
                (None, b) => m = b,
                _ => {}
            }
        }
        let m = m.ok_or_else(|| constraint("m", "number of signals is missing"))?;
        if m == 0 {
            return Err(constraint("m", "signal count must be positive"));
        }

        let epsilons = match (self.epsilon, self.epsilons) {
            (Some(_), Some(_)) => return Err(constraint("epsilons", "give either epsilon or epsilons, not both")),
            (Some(e), None) => EpsilonSchedule::uniform(e, m)?,
            (None, Some(v)) => EpsilonSchedule::new(v)?,
            (None, None) => return Err(constraint("epsilon", "tolerance is missing")),
        };
        let bands = match (self.bands, self.cuts) {
            (Some(pairs), _) => pairs.into_iter().map(|[lo, hi]| Band::new(lo, hi)).collect(),
            (_, Some(cuts)) => bands_from_cuts(&cuts)?,
            _ => equal_width_bands(m),
        };
        if let Some(b) = self.revert_budget {
            if b as usize != self.revert_steps.len() {
                return Err(constraint(
                    "revert_steps",
                    format!("revert budget {b} needs {b} planned revert steps, got {}", self.revert_steps.len()),
                ));
            }
        }
        let spec = MeterSpec {
            mode: self.mode,
            bands,
            epsilons,
            delta: self.delta,
            steps: self.steps,
            tenancy: self.tenancy.unwrap_or_else(|| vec![self.steps]),
            revert_steps: self.revert_steps,
            conservative_multitenant: self.conservative_multitenant,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub spec: MeterSpec,
    pub report: PlanReport,
}

/// Dataset upload: either a label map or line-oriented records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRequest {
    #[serde(default)]
    pub id: Option<DatasetId>,
    #[serde(default)]
    pub sealed: bool,
    pub items: LabelMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub spec: PlanRequest,
    pub val: DatasetId,
    pub test: DatasetId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRequest {
    pub predictions: LabelMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotateRequest {
    pub test: DatasetId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotateResponse {
    pub retired: DatasetId,
    pub report: SignalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterBand {
    pub signal: usize,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
}

/// Everything needed to draw the meter gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterView {
    pub session: SessionId,
    pub seq: u64,
    pub mode: Mode,
    pub bands: Vec<MeterBand>,
    /// Displayed signal, absent before the first submission.
    pub current: Option<usize>,
    pub interval: Option<(f64, f64)>,
    pub remaining_submissions: u32,
    pub remaining_reverts: u32,
}

impl MeterView {
    pub fn new(summary: &SessionSummary) -> Self {
        let report = &summary.report;
        let bands = summary
            .spec
            .bands
            .iter()
            .enumerate()
            .map(|(i, b)| MeterBand {
                signal: i + 1,
                lower: b.lower,
                upper: b.upper,
                epsilon: summary.spec.epsilons.get(i + 1),
            })
            .collect();
        Self {
            session: summary.id.clone(),
            seq: summary.seq,
            mode: summary.spec.mode,
            bands,
            current: report.displayed_signal(),
            interval: report.derived_ovft_interval,
            remaining_submissions: report.remaining_submissions,
            remaining_reverts: report.remaining_reverts,
        }
    }
}

/// A failure as both front ends report it: a class (exit code or HTTP
/// status), a stable code, a message and structured details. Messages only
/// ever name ids and counts, never labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub kind: FailureKind,
    pub code: String,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(kind: FailureKind, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind,
            code: code.into(),
            message: message.into(),
            details: json!({}),
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn validation(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(FailureKind::Validation, code, message)
    }

    pub fn unauthenticated() -> Self {
        Self::new(FailureKind::Authorization, "unauthenticated", "missing or unknown bearer token")
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Validation => 3,
            FailureKind::Authorization => 4,
            FailureKind::State => 5,
            FailureKind::NotFound => 6,
            FailureKind::Storage => 7,
        }
    }

    pub fn body(&self) -> Value {
        json!({ "error": { "code": self.code, "message": self.message, "details": self.details } })
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<PlanError> for ApiError {
    fn from(e: PlanError) -> Self {
        ApiError::validation("invalid_spec", e.to_string()).with_details(json!({ "field": e.field() }))
    }
}

fn engine_details(e: &EngineError) -> Value {
    match e {
        EngineError::Spec(p) => json!({ "field": p.field() }),
        EngineError::UndersizedTestSet {
            required,
            actual,
            deficit,
        } => json!({
            "required": required.to_string(),
            "actual": actual.to_string(),
            "deficit": deficit.to_string(),
        }),
        EngineError::UnsealedTestSet(id) => json!({ "dataset": id }),
        EngineError::OverlappingIds(n) => json!({ "overlap": n }),
        EngineError::Coverage { missing, extra } => json!({ "missing": missing, "extra": extra }),
        EngineError::WrongDataset { expected, got } => json!({ "expected": expected, "got": got }),
        EngineError::Exhausted => json!({ "next_action": "rotate" }),
        EngineError::TenantBudgetExhausted { tenant, budget } => {
            json!({ "tenant": tenant, "budget": budget, "next_action": "handoff" })
        }
        EngineError::PrematureHandoff { used, budget } => json!({ "used": used, "budget": budget }),
        EngineError::IdentityReuse(id) => json!({ "dataset": id }),
        _ => json!({}),
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let details = match &e {
            RegistryError::Forbidden { role, action, .. } => json!({ "role": role, "action": action }),
            RegistryError::NotFound { kind, id } => json!({ "kind": kind, "id": id }),
            RegistryError::Immutable(id) => json!({ "dataset": id }),
            RegistryError::Conflict { expected, actual } => {
                json!({ "expected_seq": expected.to_string(), "actual_seq": actual.to_string() })
            }
            RegistryError::IdempotencyMismatch(key) => json!({ "idempotency_key": key }),
            RegistryError::Engine(inner) => engine_details(inner),
            _ => json!({}),
        };
        ApiError::new(e.kind(), e.code(), e.to_string()).with_details(details)
    }
}

impl From<UploadError> for ApiError {
    fn from(e: UploadError) -> Self {
        ApiError::validation("malformed_upload", e.to_string())
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Plan(p) => p.into(),
            other => ApiError::validation("invalid_simulation", other.to_string()),
        }
    }
}

impl From<OracleError> for ApiError {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::CapExceeded { .. } => "enumeration_cap",
            OracleError::Invalid(_) => "invalid_enumeration",
        };
        ApiError::validation(code, e.to_string())
    }
}

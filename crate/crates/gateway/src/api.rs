//! The `/v1` HTTP API.
//!
//! Every request carries `Authorization: Bearer <token>`. Mutations accept
//! `Idempotency-Key` and `Expected-Seq` headers, and every session response
//! carries the session's sequence number in the body and in `Session-Seq`.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use holdmeter::engine::SessionId;
use holdmeter::planner::plan;
use holdmeter::registry::{
    parse_records, DatasetId, FailureKind, LabelMap, Mutation, Principal, RecordKind, Registry,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::wire::{
    ApiError, DatasetRequest, MeterView, PlanRequest, PlanResponse, RotateRequest, RotateResponse, SessionRequest,
    SubmissionRequest,
};

pub const SEQ_HEADER: &str = "session-seq";
pub const EXPECTED_SEQ_HEADER: &str = "expected-seq";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
/// Content type for line-oriented uploads.
pub const NDJSON: &str = "application/x-ndjson";

pub struct AppState {
    registry: Mutex<Registry>,
    config: Config,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(registry: Registry, config: Config) -> Shared {
        Arc::new(Self {
            registry: Mutex::new(registry),
            config,
        })
    }

    fn registry(&self) -> MutexGuard<'_, Registry> {
        // mutations are staged and only installed once logged, so a panic
        // mid-request cannot leave a half-applied state behind
        self.registry.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// The registry described by `config`: durable if a storage path is set.
pub fn open_registry(config: &Config) -> Result<Registry, ApiError> {
    match &config.storage {
        Some(dir) => Ok(Registry::open(dir)
            .map_err(ApiError::from)?
            .with_snapshot_every(config.snapshot_every)),
        None => Ok(Registry::in_memory()),
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            FailureKind::Validation => StatusCode::BAD_REQUEST,
            FailureKind::Authorization if self.code == "unauthenticated" => StatusCode::UNAUTHORIZED,
            FailureKind::Authorization => StatusCode::FORBIDDEN,
            FailureKind::State => StatusCode::CONFLICT,
            FailureKind::NotFound => StatusCode::NOT_FOUND,
            FailureKind::Storage => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.body())).into_response()
    }
}

/// The authenticated caller.
pub struct Auth(pub Principal);

impl FromRequestParts<Shared> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthenticated)?;
        state.config.authenticate(token.trim()).map(Auth).ok_or_else(ApiError::unauthenticated)
    }
}

/// Concurrency and retry headers of a mutation.
pub struct MutationHeaders(pub Mutation);

impl<S: Send + Sync> FromRequestParts<S> for MutationHeaders {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _state: &S) -> Result<Self, Self::Rejection> {
        let text = |name: &str| -> Result<Option<String>, ApiError> {
            parts
                .headers
                .get(name)
                .map(|v| {
                    v.to_str()
                        .map(str::to_string)
                        .map_err(|_| ApiError::validation("bad_header", format!("{name} is not valid text")))
                })
                .transpose()
        };
        let expected_seq = text(EXPECTED_SEQ_HEADER)?
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| ApiError::validation("bad_header", format!("{EXPECTED_SEQ_HEADER} must be an integer")))
            })
            .transpose()?;
        Ok(MutationHeaders(Mutation {
            expected_seq,
            idempotency_key: text(IDEMPOTENCY_HEADER)?,
        }))
    }
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation("malformed_body", e.to_string()))
}

fn is_ndjson(headers: &HeaderMap) -> bool {
    headers
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with(NDJSON))
}

fn with_seq(seq: u64, body: impl Serialize) -> Response {
    let mut response = Json(body).into_response();
    response.headers_mut().insert(SEQ_HEADER, HeaderValue::from(seq));
    response
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/plan", post(create_plan))
        .route("/v1/datasets", get(list_datasets).post(register_dataset))
        .route("/v1/datasets/{id}", get(dataset_info))
        .route("/v1/datasets/{id}/labels", get(read_labels))
        .route("/v1/sessions", get(list_sessions).post(create_session))
        .route("/v1/sessions/{id}", get(session_summary))
        .route("/v1/sessions/{id}/status", get(status))
        .route("/v1/sessions/{id}/history", get(history))
        .route("/v1/sessions/{id}/meter", get(meter))
        .route("/v1/sessions/{id}/submissions", post(submit))
        .route("/v1/sessions/{id}/revert", post(revert))
        .route("/v1/sessions/{id}/handoff", post(handoff))
        .route("/v1/sessions/{id}/rotate", post(rotate))
        .route("/v1/sessions/{id}/close", post(close))
        .fallback(|| async { ApiError::new(FailureKind::NotFound, "no_route", "no such endpoint") })
        .with_state(state)
}

/// Serve `config` until ctrl-c.
pub async fn serve(config: Config) -> Result<(), ApiError> {
    let registry = open_registry(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| ApiError::validation("bind_failed", format!("cannot bind {}: {e}", config.bind)))?;
    eprintln!("holdmeter listening on {}", config.bind);
    let app = router(AppState::new(registry, config));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::new(FailureKind::Storage, "server_failed", e.to_string()))
}

async fn create_plan(Auth(_): Auth, body: Bytes) -> Result<Response, ApiError> {
    let spec = parse_json::<PlanRequest>(&body)?.into_spec()?;
    let report = plan(&spec)?;
    Ok(Json(PlanResponse { spec, report }).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct UploadQuery {
    id: Option<String>,
    #[serde(default)]
    sealed: bool,
}

async fn register_dataset(
    State(s): State<Shared>,
    Auth(p): Auth,
    MutationHeaders(m): MutationHeaders,
    Query(q): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req = if is_ndjson(&headers) {
        DatasetRequest {
            id: q.id.as_deref().map(DatasetId::from),
            sealed: q.sealed,
            items: parse_records(&body[..], RecordKind::Label)?,
        }
    } else {
        parse_json(&body)?
    };
    let mut reg = s.registry();
    let id = reg.register_dataset(&p, req.id, req.items, req.sealed, now_ms(), &m)?;
    let info = reg.dataset_info(&p, &id)?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn list_datasets(State(s): State<Shared>, Auth(p): Auth) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "datasets": s.registry().list_datasets(&p) }))
}

async fn dataset_info(State(s): State<Shared>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.registry().dataset_info(&p, &DatasetId::from(id.as_str()))?).into_response())
}

async fn read_labels(State(s): State<Shared>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.registry().read_labels(&p, &DatasetId::from(id.as_str()))?).into_response())
}

async fn create_session(
    State(s): State<Shared>,
    Auth(p): Auth,
    MutationHeaders(m): MutationHeaders,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: SessionRequest = parse_json(&body)?;
    let spec = req.spec.into_spec()?;
    let summary = s.registry().create_session(&p, spec, req.val, req.test, now_ms(), &m)?;
    let mut response = with_seq(summary.seq, &summary);
    *response.status_mut() = StatusCode::CREATED;
    Ok(response)
}

async fn list_sessions(State(s): State<Shared>, Auth(p): Auth) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "sessions": s.registry().list_sessions(&p) }))
}

async fn session_summary(State(s): State<Shared>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    let summary = s.registry().session_summary(&p, &SessionId::from(id.as_str()))?;
    Ok(with_seq(summary.seq, summary))
}

async fn status(State(s): State<Shared>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    let report = s.registry().status(&p, &SessionId::from(id.as_str()))?;
    Ok(with_seq(report.seq, report))
}

async fn history(State(s): State<Shared>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    let view = s.registry().history(&p, &SessionId::from(id.as_str()))?;
    Ok(with_seq(view.seq, view))
}

async fn meter(State(s): State<Shared>, Auth(p): Auth, Path(id): Path<String>) -> Result<Response, ApiError> {
    let summary = s.registry().session_summary(&p, &SessionId::from(id.as_str()))?;
    Ok(with_seq(summary.seq, MeterView::new(&summary)))
}

fn predictions(headers: &HeaderMap, body: &[u8]) -> Result<LabelMap, ApiError> {
    if is_ndjson(headers) {
        Ok(parse_records(body, RecordKind::Prediction)?)
    } else {
        Ok(parse_json::<SubmissionRequest>(body)?.predictions)
    }
}

async fn submit(
    State(s): State<Shared>,
    Auth(p): Auth,
    Path(id): Path<String>,
    MutationHeaders(m): MutationHeaders,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let preds = predictions(&headers, &body)?;
    let report = s.registry().submit(&p, &SessionId::from(id.as_str()), preds, now_ms(), &m)?;
    Ok(with_seq(report.seq, report))
}

async fn revert(
    State(s): State<Shared>,
    Auth(p): Auth,
    Path(id): Path<String>,
    MutationHeaders(m): MutationHeaders,
) -> Result<Response, ApiError> {
    let report = s.registry().revert(&p, &SessionId::from(id.as_str()), now_ms(), &m)?;
    Ok(with_seq(report.seq, report))
}

async fn handoff(
    State(s): State<Shared>,
    Auth(p): Auth,
    Path(id): Path<String>,
    MutationHeaders(m): MutationHeaders,
) -> Result<Response, ApiError> {
    let report = s.registry().handoff(&p, &SessionId::from(id.as_str()), now_ms(), &m)?;
    Ok(with_seq(report.seq, report))
}

async fn rotate(
    State(s): State<Shared>,
    Auth(p): Auth,
    Path(id): Path<String>,
    MutationHeaders(m): MutationHeaders,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: RotateRequest = parse_json(&body)?;
    let (retired, report) = s.registry().rotate(&p, &SessionId::from(id.as_str()), req.test, now_ms(), &m)?;
    Ok(with_seq(report.seq, RotateResponse { retired, report }))
}

async fn close(
    State(s): State<Shared>,
    Auth(p): Auth,
    Path(id): Path<String>,
    MutationHeaders(m): MutationHeaders,
) -> Result<Response, ApiError> {
    let report = s.registry().close(&p, &SessionId::from(id.as_str()), now_ms(), &m)?;
    Ok(with_seq(report.seq, report))
}

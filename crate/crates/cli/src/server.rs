//! HTTP API over analyzed sessions and the live monitor.
//!
//! | method | path                              |
//! |--------|-----------------------------------|
//! | POST   | `/sessions`                       |
//! | GET    | `/sessions/{id}/report`           |
//! | GET    | `/sessions/{id}/metrics/{kind}`   |
//! | GET    | `/sessions/{id}/scatter`          |
//! | GET    | `/sessions/{id}/tokens`           |
//! | GET    | `/sessions/{id}/tokens/{pos}/topk`|
//! | GET    | `/monitor/status`                 |
//! | POST   | `/monitor/baseline`               |
//!
//! `POST /sessions` takes either an `application/json` object
//! (`{"label", "records"}` or `{"label", "prompt", "backend"}`) or a raw
//! record stream in any other content type, labelled by `?label=`.

use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use tokscope_core::{
    AnalysisSession, BackendDescriptor, Error, FlagThresholds, MetricKind, MonitorConfig,
    MonitorState, SessionId, TokenMetrics,
};

use crate::error::Failure;
use crate::source::{
    session_from_backend, session_from_records, DEFAULT_PROMPT_LABEL, DEFAULT_RECORDS_LABEL,
};
use crate::store::{Lookup, SessionStore};

pub const DEFAULT_TOPK: usize = 10;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub capacity: NonZeroUsize,
    pub backend: Option<BackendDescriptor>,
    pub assets: Option<PathBuf>,
    pub thresholds: FlagThresholds,
    pub monitor: MonitorConfig,
}

impl ServiceConfig {
    pub fn new(addr: SocketAddr) -> Self {
        ServiceConfig {
            addr,
            capacity: NonZeroUsize::new(64).expect("non-zero"),
            backend: None,
            assets: None,
            thresholds: FlagThresholds::default(),
            monitor: MonitorConfig::default(),
        }
    }
}

pub struct AppState {
    store: SessionStore,
    monitor: Mutex<MonitorState>,
    backend: Option<BackendDescriptor>,
    thresholds: FlagThresholds,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> Result<Self, Failure> {
        config.thresholds.validate()?;
        if let Some(b) = &config.backend {
            b.validate()?;
        }
        Ok(AppState {
            store: SessionStore::new(config.capacity),
            monitor: Mutex::new(MonitorState::new(config.monitor)?),
            backend: config.backend.clone(),
            thresholds: config.thresholds,
        })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }
}

pub fn router(state: Arc<AppState>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/metrics/{kind}", get(metric))
        .route("/sessions/{id}/scatter", get(scatter))
        .route("/sessions/{id}/tokens", get(tokens))
        .route("/sessions/{id}/tokens/{pos}/topk", get(topk))
        .route("/monitor/status", get(monitor_status))
        .route("/monitor/baseline", post(freeze_baseline))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `config.addr` and returns the bound address with the serving task.
pub async fn spawn(
    config: ServiceConfig,
) -> Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>), Failure> {
    let state = Arc::new(AppState::new(&config)?);
    let listener = TcpListener::bind(config.addr)
        .await
        .map_err(|e| Failure::Service(format!("cannot bind {}: {e}", config.addr)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Failure::Service(e.to_string()))?;
    let app = router(state, config.assets);
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((addr, handle))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::BackendTimeout { .. } => StatusCode::GATEWAY_TIMEOUT,
            e if e.is_backend() => StatusCode::BAD_GATEWAY,
            Error::NoData | Error::NoBaseline => StatusCode::CONFLICT,
            Error::UnknownMetric(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<AnalysisSession>> {
    let id: SessionId = id
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("no session `{id}`")))?;
    match state.store.get(id) {
        Lookup::Found(s) => Ok(s),
        Lookup::Gone => Err(ApiError::new(
            StatusCode::GONE,
            format!("session {id} was evicted"),
        )),
        Lookup::Unknown => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("no session `{id}`"),
        )),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    label: Option<String>,
    /// Line-delimited records.
    records: Option<String>,
    prompt: Option<String>,
    backend: Option<BackendDescriptor>,
}

#[derive(Debug, Deserialize)]
struct LabelQuery {
    label: Option<String>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: SessionId,
    label: String,
    tokens: usize,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Query(query): Query<LabelQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let session = if is_json {
        let req: CreateSession = serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
        match (req.records, req.prompt) {
            (Some(records), None) => {
                let label = req.label.as_deref().unwrap_or(DEFAULT_RECORDS_LABEL);
                session_from_records(label, records.as_bytes(), None)?
            }
            (None, Some(prompt)) => {
                let backend = req
                    .backend
                    .or_else(|| state.backend.clone())
                    .ok_or_else(|| {
                        ApiError::new(StatusCode::BAD_REQUEST, "no backend configured for prompt")
                    })?;
                let label = req.label.as_deref().unwrap_or(DEFAULT_PROMPT_LABEL);
                session_from_backend(label, &backend, &prompt).await?
            }
            _ => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "exactly one of `records` or `prompt` is required",
                ))
            }
        }
    } else {
        let label = query.label.as_deref().unwrap_or(DEFAULT_RECORDS_LABEL);
        session_from_records(label, &body, None)?
    };

    {
        let mut monitor = state.monitor.lock().expect("monitor poisoned");
        for d in session.distributions() {
            monitor.observe(&TokenMetrics::compute(d));
            if monitor.baseline().is_some() {
                monitor.check_all()?;
            }
        }
    }
    let session = state.store.insert(session);
    let created = Created {
        id: session.id(),
        label: session.label().to_string(),
        tokens: session.len(),
    };
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let body = session.report(&state.thresholds).to_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

#[derive(Debug, Serialize)]
struct MetricBody {
    kind: MetricKind,
    values: Vec<f64>,
    intensities: Vec<f64>,
    compute_count: usize,
}

async fn metric(
    State(state): State<Arc<AppState>>,
    Path((id, kind)): Path<(String, String)>,
) -> ApiResult<Json<MetricBody>> {
    let session = lookup(&state, &id)?;
    let kind: MetricKind = kind.parse()?;
    Ok(Json(MetricBody {
        kind,
        values: session.metric(kind).to_vec(),
        intensities: session.intensities(kind),
        compute_count: session.cache().compute_count(kind),
    }))
}

async fn scatter(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    Ok(Json(session.scatter()).into_response())
}

#[derive(Debug, Serialize)]
struct TokenRow {
    position: usize,
    token: String,
    token_id: u32,
    approximate: bool,
}

async fn tokens(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<TokenRow>>> {
    let session = lookup(&state, &id)?;
    let rows = session
        .distributions()
        .iter()
        .zip(session.texts())
        .enumerate()
        .map(|(position, (d, t))| TokenRow {
            position,
            token: t.clone(),
            token_id: d.selected_token_id(),
            approximate: d.is_approximate(),
        })
        .collect();
    Ok(Json(rows))
}

#[derive(Debug, Deserialize)]
struct TopkQuery {
    k: Option<usize>,
}

async fn topk(
    State(state): State<Arc<AppState>>,
    Path((id, pos)): Path<(String, usize)>,
    Query(query): Query<TopkQuery>,
) -> ApiResult<Response> {
    let session = lookup(&state, &id)?;
    let k = query.k.unwrap_or(DEFAULT_TOPK);
    let top = session.top_alternatives(pos, k).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!(
                "position {pos} is outside a session of {} tokens",
                session.len()
            ),
        )
    })?;
    Ok(Json(top).into_response())
}

async fn monitor_status(State(state): State<Arc<AppState>>) -> Response {
    let status = state.monitor.lock().expect("monitor poisoned").status();
    Json(status).into_response()
}

async fn freeze_baseline(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    let mut monitor = state.monitor.lock().expect("monitor poisoned");
    let baseline = monitor.freeze_baseline()?.clone();
    Ok(Json(baseline).into_response())
}

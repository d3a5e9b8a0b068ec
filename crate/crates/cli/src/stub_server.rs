//! A completions endpoint backed by [`TrigramStub`], for local runs and tests.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokscope_core::TrigramStub;

use crate::error::Failure;

/// How the stub answers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Behavior {
    #[default]
    Normal,
    /// Answers without a `logprobs` field.
    NoLogprobs,
    /// Always answers with this status.
    Status(u16),
    /// Waits this long before answering normally.
    Delay(Duration),
}

#[derive(Clone)]
struct StubState {
    stub: Arc<TrigramStub>,
    behavior: Behavior,
}

#[derive(Debug, Deserialize)]
struct CompletionRequest {
    #[serde(default)]
    model: Option<String>,
    prompt: String,
    #[serde(default)]
    logprobs: Option<usize>,
    #[serde(default)]
    echo: bool,
}

pub fn router(stub: Arc<TrigramStub>, behavior: Behavior) -> Router {
    Router::new()
        .route("/v1/completions", post(complete))
        .route("/completions", post(complete))
        .with_state(StubState { stub, behavior })
}

/// Binds `addr` and serves the stub; the base URL for clients is
/// `http://{bound}/v1`.
pub async fn spawn(
    addr: SocketAddr,
    stub: Arc<TrigramStub>,
    behavior: Behavior,
) -> Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>), Failure> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| Failure::Service(format!("cannot bind {addr}: {e}")))?;
    let bound = listener
        .local_addr()
        .map_err(|e| Failure::Service(e.to_string()))?;
    let app = router(stub, behavior);
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((bound, handle))
}

async fn complete(State(state): State<StubState>, Json(req): Json<CompletionRequest>) -> Response {
    let model = req.model.unwrap_or_else(|| "trigram-stub".into());
    match state.behavior {
        Behavior::Status(code) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (status, Json(json!({"error": {"message": "stub failure"}}))).into_response();
        }
        Behavior::NoLogprobs => {
            return Json(json!({
                "object": "text_completion",
                "model": model,
                "choices": [{"index": 0, "text": req.prompt, "finish_reason": "length"}],
            }))
            .into_response();
        }
        Behavior::Delay(d) => tokio::time::sleep(d).await,
        Behavior::Normal => {}
    }
    match (req.echo, req.logprobs) {
        (true, Some(k)) if k > 0 => {
            Json(state.stub.completion_json(&model, &req.prompt, k)).into_response()
        }
        _ => (
            StatusCode::BAD_REQUEST,
            Json(
                json!({"error": {"message": "only echo scoring with logprobs >= 1 is supported"}}),
            ),
        )
            .into_response(),
    }
}

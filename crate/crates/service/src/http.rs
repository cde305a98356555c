//! HTTP front end over [`Engine`].
//!
//! Pipeline work is blocking and runs on tokio's blocking pool.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::{ApiError, AskRequest, Engine, FeedbackRequest};

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/api/ask", post(ask))
        .route("/api/feedback", post(feedback))
        .route("/api/documents/{id}", get(document))
        .route("/api/health", get(health))
        .with_state(engine)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a ApiError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody { error: &self })).into_response()
    }
}

// Decode errors are reported in the same envelope as everything else.
fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(400, "request", format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(500, "internal", format!("worker failed: {e}"))))
}

async fn ask(State(engine): State<Arc<Engine>>, body: Bytes) -> Result<Response, ApiError> {
    let req: AskRequest = decode(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::new(400, "request", "question must not be empty"));
    }
    let resp = blocking(move || engine.handle_ask(&req.question)).await?;
    Ok(Json(resp).into_response())
}

async fn feedback(State(engine): State<Arc<Engine>>, body: Bytes) -> Result<Response, ApiError> {
    let req: FeedbackRequest = decode(&body)?;
    let ack = blocking(move || engine.handle_feedback(req)).await?;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn document(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(engine.handle_get_document(&id)?).into_response())
}

async fn health(State(engine): State<Arc<Engine>>) -> Result<Response, ApiError> {
    let report = blocking(move || Ok(engine.health())).await?;
    Ok(Json(report).into_response())
}

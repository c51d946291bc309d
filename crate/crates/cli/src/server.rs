//! HTTP front end for interactive sessions. Field names are documented in
//! `docs/api.md`.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ktsim_core::session::{AttemptRequest, CreateRequest, SessionError, SessionManager};
use serde_json::json;

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            SessionError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            SessionError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        (status, Json(json!({ "error": kind, "message": self.0.to_string() }))).into_response()
    }
}

type Shared = State<Arc<SessionManager>>;

async fn create(
    State(m): Shared,
    body: Option<Json<CreateRequest>>,
) -> Result<impl IntoResponse, ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    Ok((StatusCode::CREATED, Json(m.create(req)?)))
}

async fn state(State(m): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(m.state(&id)?))
}

async fn attempt(
    State(m): Shared,
    Path(id): Path<String>,
    Json(req): Json<AttemptRequest>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(m.attempt(&id, req)?))
}

async fn stop(State(m): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(m.stop(&id)?))
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/attempts", post(attempt))
        .route("/sessions/{id}/stop", post(stop))
        .with_state(manager)
}

//! HTTP front end for labelling sessions.
//!
//! | method | path                      | body                    |
//! |--------|---------------------------|-------------------------|
//! | POST   | `/sessions`               | pool and sampler config |
//! | GET    | `/sessions/{id}/query`    |                         |
//! | POST   | `/sessions/{id}/labels`   | `{pair_id, label}`      |
//! | GET    | `/sessions/{id}/estimate` |                         |
//!
//! Errors come back as `{category, message, field?}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use oasis_core::service::{parse_label, CreateSession, EstimateSnapshot, Query, SessionManager};
use oasis_core::{Error, ErrorCategory};

#[derive(Clone)]
struct AppState {
    sessions: Arc<SessionManager>,
    token: Option<Arc<str>>,
}

/// Router over `sessions`. With a `token`, every request must carry
/// `Authorization: Bearer <token>`.
pub fn router(sessions: Arc<SessionManager>, token: Option<String>) -> Router {
    let state = AppState { sessions, token: token.map(Arc::from) };
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/labels", post(label))
        .route("/sessions/{id}/estimate", get(estimate))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route", None) })
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub category: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, category: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                category: category.to_string(),
                message: message.into(),
                field: field.map(String::from),
            },
        }
    }

    fn input(message: impl Into<String>, field: Option<&str>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "input", message, field)
    }
}

pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::SessionNotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict { .. } | Error::SessionExists(_) => StatusCode::CONFLICT,
        Error::SessionExhausted(_) => StatusCode::GONE,
        _ => match err.category() {
            ErrorCategory::Input | ErrorCategory::Parameter | ErrorCategory::Undefined => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ErrorCategory::Session => StatusCode::CONFLICT,
            ErrorCategory::Oracle | ErrorCategory::Io => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let status = status_for(&err);
        if status.is_server_error() {
            tracing::error!(error = %err, "request failed");
        }
        ApiError::new(status, &err.category().to_string(), err.to_string(), err.field())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

async fn auth(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "auth", "missing or invalid bearer token", None)
                .into_response();
        }
    }
    next.run(request).await
}

/// Runs a session operation off the async executor; it may write to the
/// event log.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&SessionManager) -> oasis_core::Result<T> + Send + 'static,
{
    let sessions = Arc::clone(&state.sessions);
    tokio::task::spawn_blocking(move || f(&sessions))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e.to_string(), None))?
        .map_err(ApiError::from)
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::input(format!("invalid JSON body: {e}"), None))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub estimate: EstimateSnapshot,
    pub query: Option<Query>,
}

async fn create(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let request: CreateSession = parse_json(&body)?;
    let created = blocking(&state, move |m| {
        let estimate = m.create_session(request)?;
        let query = m.next_query(&estimate.session_id).ok();
        Ok(Created { session_id: estimate.session_id.clone(), estimate, query })
    })
    .await?;
    tracing::info!(session = %created.session_id, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

async fn query(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Query>, ApiError> {
    blocking(&state, move |m| m.next_query(&id)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct LabelBody {
    pair_id: Option<String>,
    label: Option<Value>,
}

async fn label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let body: LabelBody = parse_json(&body)?;
    let pair_id = body.pair_id.ok_or_else(|| ApiError::input("missing `pair_id`", Some("pair_id")))?;
    let label = body.label.ok_or_else(|| ApiError::input("missing `label`", Some("label")))?;
    let label = parse_label(&label)?;
    let outcome = blocking(&state, move |m| m.submit_label(&id, &pair_id, label)).await?;
    Ok(Json(outcome).into_response())
}

async fn estimate(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<EstimateSnapshot>, ApiError> {
    blocking(&state, move |m| m.get_estimate(&id)).await.map(Json)
}

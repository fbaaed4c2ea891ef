//! HTTP API.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::service::{Health, MarkResponse, ResultPage, SearchRequest, SearchService};

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MarkRequest {
    pub observation_id: u64,
    pub marked: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidRequest(_) | ServiceError::InvalidMark(_) => StatusCode::BAD_REQUEST,
            ServiceError::EmptyExport => StatusCode::CONFLICT,
            ServiceError::EncoderUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Core(e) => match e {
                ecosearch_core::Error::InvalidParameter(_)
                | ecosearch_core::Error::InvalidFilter(_)
                | ecosearch_core::Error::Shape { .. } => StatusCode::BAD_REQUEST,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (
            self.status(),
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

type AppState = Arc<SearchService>;

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?
}

async fn health(State(svc): State<AppState>) -> Json<Health> {
    Json(svc.health())
}

async fn create_session(State(svc): State<AppState>) -> Result<Json<SessionCreated>, ServiceError> {
    let session_id = blocking(move || svc.create_session()).await?;
    Ok(Json(SessionCreated { session_id }))
}

/// Malformed bodies become 400s with the usual error shape.
fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    r.map(|Json(v)| v).map_err(|e| ServiceError::InvalidRequest(e.body_text()))
}

async fn search(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<SearchRequest>, JsonRejection>,
) -> Result<Json<ResultPage>, ServiceError> {
    let req = body(req)?;
    Ok(Json(blocking(move || svc.run_query(&id, &req)).await?))
}

async fn mark(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<MarkRequest>, JsonRejection>,
) -> Result<Json<MarkResponse>, ServiceError> {
    let req = body(req)?;
    Ok(Json(
        blocking(move || svc.mark(&id, req.observation_id, req.marked)).await?,
    ))
}

async fn export(State(svc): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let name = format!("attachment; filename=\"session-{id}.csv\"");
    let body = blocking(move || svc.export_csv(&id)).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, name),
        ],
        body,
    )
        .into_response())
}

/// API routes, plus static files under `/ui` when `ui_dir` is given.
pub fn router(svc: Arc<SearchService>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/search", post(search))
        .route("/v1/sessions/{id}/marks", post(mark))
        .route("/v1/sessions/{id}/export.csv", get(export))
        .with_state(svc);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir)),
        None => api,
    }
}

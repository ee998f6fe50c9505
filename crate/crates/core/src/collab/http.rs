//! HTTP/1.1 front end of the [`Hub`].
//!
//! | method | path                              | success               |
//! |--------|-----------------------------------|-----------------------|
//! | POST   | `/projects`                       | 201 `{pid, revision}` |
//! | GET    | `/projects/{pid}`                 | 200 canonical document|
//! | GET    | `/projects/{pid}?since=N`         | 200 `{revision, ops}` |
//! | POST   | `/projects/{pid}/changes`         | 200 `{accepted, revision}` |
//! | GET    | `/projects/{pid}/export?format=F` | 200 CSV or JSON       |
//!
//! Errors are JSON objects with at least `error` and `message`.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{ChangeSet, Hub, HubError};
use crate::serialization::LoadError;

const JSON: &str = "application/json";

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{pid}", get(get_project))
        .route("/projects/{pid}/changes", post(push_changes))
        .route("/projects/{pid}/export", get(export))
        .with_state(hub)
}

/// Serves `hub` on `listener` until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, hub: Arc<Hub>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(hub)).with_graceful_shutdown(shutdown).await
}

fn error_response(err: HubError) -> Response {
    let message = err.to_string();
    let (status, body) = match &err {
        HubError::NotFound(_) => (StatusCode::NOT_FOUND, json!({"error": "not_found", "message": message})),
        HubError::Duplicate(_) => (StatusCode::CONFLICT, json!({"error": "duplicate_pid", "message": message})),
        HubError::RevisionAhead { head, .. } => (
            StatusCode::CONFLICT,
            json!({"error": "revision_ahead", "message": message, "revision": head}),
        ),
        HubError::RevisionBeforeLog { floor, .. } => (
            StatusCode::GONE,
            json!({"error": "revision_before_log", "message": message, "floor": floor}),
        ),
        HubError::BadPid(_) => (StatusCode::BAD_REQUEST, json!({"error": "bad_pid", "message": message})),
        HubError::Malformed(_) => (StatusCode::BAD_REQUEST, json!({"error": "malformed", "message": message})),
        HubError::UnknownFormat(_) => {
            (StatusCode::BAD_REQUEST, json!({"error": "unknown_format", "message": message}))
        }
        HubError::Load(LoadError::Parse { line, column, .. }) => (
            StatusCode::BAD_REQUEST,
            json!({"error": "parse", "message": message, "line": line, "column": column}),
        ),
        HubError::Load(LoadError::InvalidProject(violations)) => (
            StatusCode::BAD_REQUEST,
            json!({
                "error": "invalid_project",
                "message": message,
                "violations": violations.iter().map(ToString::to_string).collect::<Vec<_>>(),
            }),
        ),
        HubError::Load(LoadError::SchemaVersionUnsupported(_)) => (
            StatusCode::BAD_REQUEST,
            json!({"error": "schema_version_unsupported", "message": message}),
        ),
        HubError::Load(LoadError::Schema(_)) => {
            (StatusCode::BAD_REQUEST, json!({"error": "schema", "message": message}))
        }
        HubError::Storage(_) | HubError::Replay(_) => {
            tracing::error!(error = %message, "storage failure");
            (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "storage", "message": message}))
        }
    };
    (status, Json(body)).into_response()
}

async fn blocking<T, F>(f: F) -> Result<T, Response>
where
    F: FnOnce() -> Result<T, HubError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map_err(error_response),
        Err(e) => Err((StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response()),
    }
}

async fn create_project(State(hub): State<Arc<Hub>>, body: Bytes) -> Response {
    match blocking(move || hub.create(&body)).await {
        Ok((pid, revision)) => (StatusCode::CREATED, Json(json!({"pid": pid, "revision": revision}))).into_response(),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct SinceQuery {
    since: Option<u64>,
}

async fn get_project(State(hub): State<Arc<Hub>>, Path(pid): Path<String>, Query(q): Query<SinceQuery>) -> Response {
    match q.since {
        None => match hub.document(&pid) {
            Ok(doc) => ([(header::CONTENT_TYPE, JSON)], doc).into_response(),
            Err(e) => error_response(e),
        },
        Some(since) => match hub.changes_since(&pid, since) {
            Ok(changes) => Json(changes).into_response(),
            Err(e) => error_response(e),
        },
    }
}

async fn push_changes(State(hub): State<Arc<Hub>>, Path(pid): Path<String>, body: Bytes) -> Response {
    // 404 takes precedence over a malformed body
    if let Err(e) = hub.revision(&pid) {
        return error_response(e);
    }
    let cs: ChangeSet = match serde_json::from_slice(&body) {
        Ok(cs) => cs,
        Err(e) => return error_response(HubError::Malformed(e.to_string())),
    };
    match blocking(move || hub.push(&pid, cs)).await {
        Ok(outcome) => Json(outcome).into_response(),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(State(hub): State<Arc<Hub>>, Path(pid): Path<String>, Query(q): Query<ExportQuery>) -> Response {
    let format = q.format.unwrap_or_else(|| "csv".to_owned());
    match hub.export(&pid, &format) {
        Ok(bytes) => {
            let ctype = if format == "csv" { "text/csv; charset=utf-8" } else { JSON };
            ([(header::CONTENT_TYPE, ctype)], bytes).into_response()
        }
        Err(e) => error_response(e),
    }
}

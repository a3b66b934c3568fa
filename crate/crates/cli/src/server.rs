//! The elicitation service.
//!
//! All session mutations go through one mutex around the session manager,
//! which also serializes appends to the response log.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hmix_core::elicit::SessionManager;
use hmix_core::hmix::write_records;
use serde::Deserialize;

use crate::api::{
    Ack, CreateSession, ErrorBody, ErrorDetail, Export, Health, NextResponse, SessionCreated, SubmitResponse,
    API_VERSION,
};

pub struct AppState {
    manager: Mutex<SessionManager>,
}

impl AppState {
    pub fn new(manager: SessionManager) -> Arc<Self> {
        Arc::new(AppState {
            manager: Mutex::new(manager),
        })
    }

    fn lock(&self) -> MutexGuard<'_, SessionManager> {
        // A panic mid-request leaves the manager consistent: every mutation
        // persists before it returns.
        self.manager.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<hmix_core::Error> for ApiError {
    fn from(e: hmix_core::Error) -> Self {
        use hmix_core::Error as E;
        let (status, code) = match &e {
            E::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            E::OutOfOrder { .. } => (StatusCode::CONFLICT, "out-of-order"),
            E::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        let code = if r.status() == StatusCode::UNPROCESSABLE_ENTITY {
            "invalid"
        } else {
            "bad-request"
        };
        ApiError::new(r.status(), code, r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            api_version: API_VERSION,
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn check_version(v: u32) -> ApiResult<()> {
    if v == API_VERSION {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "unsupported-api-version",
            format!("api_version {v} is not supported (expected {API_VERSION})"),
        ))
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let m = state.lock();
    Json(Health {
        api_version: API_VERSION,
        status: "ok".into(),
        sessions: m.session_ids().count(),
        pairs: m.pool().len(),
    })
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let Json(req) = body?;
    check_version(req.api_version)?;
    if req.participant_id.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid",
            "participant_id must not be empty",
        ));
    }
    let mut m = state.lock();
    let plan = m.create_session(&req.participant_id, req.interface_kind)?;
    log::info!("session {} ({}) for {}", plan.session_id, plan.kind.as_str(), plan.participant_id);
    Ok((StatusCode::CREATED, Json(SessionCreated::from_plan(plan))))
}

async fn next_trial(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<NextResponse>> {
    let next = state.lock().next_trial(&id)?;
    Ok(Json(NextResponse::encode(&next)))
}

async fn submit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SubmitResponse>, JsonRejection>,
) -> ApiResult<Json<Ack>> {
    let Json(req) = body?;
    check_version(req.api_version)?;
    let ack = state
        .lock()
        .submit_response(&id, req.trial_index, &req.response, req.response_ms)?;
    Ok(Json(Ack {
        api_version: API_VERSION,
        ack,
    }))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    let export = state.lock().export_session(&id)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(Export {
            api_version: API_VERSION,
            session_id: export.session_id,
            open: export.open,
            records: export.records,
        })
        .into_response()),
        Some("hmix") => {
            let mut buf = Vec::new();
            write_records(&mut buf, &export.records)?;
            Ok((
                [
                    (header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8".to_string()),
                    (header::HeaderName::from_static("x-session-open"), export.open.to_string()),
                ],
                buf,
            )
                .into_response())
        }
        Some(other) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad-request",
            format!("unknown export format `{other}` (json or hmix)"),
        )),
    }
}

const PLACEHOLDER: &str = "<!doctype html>\n<title>hmix</title>\n<p>The hmix elicitation API is running under \
<code>/api/v1</code>. Start the service with <code>--ui DIR</code> to serve a front end here.</p>\n";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

/// Routes under `/api/v1`, plus the UI bundle (or a placeholder) at `/`.
pub fn router(state: Arc<AppState>, ui: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}/next", get(next_trial))
        .route("/api/v1/sessions/{id}/responses", post(submit))
        .route("/api/v1/sessions/{id}/export", get(export))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

/// Serves until interrupted.
pub async fn serve(app: Router, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

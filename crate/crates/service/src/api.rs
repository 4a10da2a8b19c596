//! HTTP/JSON API over [`SessionManager`].
//!
//! Handlers hand the (CPU-bound) session work to the blocking pool; the
//! per-session lock inside the manager serializes writers, so of two
//! concurrent observations the second sees the new state and is refused
//! with `wrong-state`.

use crate::config::SessionSpec;
use crate::error::{ServiceError, ServiceResult};
use crate::manager::SessionManager;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use seqdesign_core::rng::GENERATOR_ID;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;
use tower_http::services::ServeDir;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

#[derive(Clone)]
struct AppState {
    manager: Arc<SessionManager>,
}

async fn blocking<T, F>(state: &AppState, f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionManager) -> ServiceResult<T> + Send + 'static,
{
    let manager = state.manager.clone();
    tokio::task::spawn_blocking(move || f(&manager))
        .await
        .map_err(|e| ServiceError::Storage(format!("worker failed: {e}")))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub generator: String,
}

async fn healthz() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generator: GENERATOR_ID.into(),
    })
}

/// `POST /sessions?id=...`; without an id a random one is assigned.
#[derive(Debug, Clone, Deserialize)]
pub struct CreateQuery {
    pub id: Option<String>,
}

async fn create(
    State(s): State<AppState>,
    Query(q): Query<CreateQuery>,
    body: Result<Json<SessionSpec>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let spec = match body {
        Ok(Json(spec)) => spec,
        Err(e) => return ServiceError::BadRequest(e.body_text()).into_response(),
    };
    let result = blocking(&s, move |m| {
        let record = m.create(spec, std::path::Path::new("."), q.id)?;
        m.view(&record.id)
    })
    .await;
    match result {
        Ok(view) => (StatusCode::CREATED, Json(view)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn list(State(s): State<AppState>) -> Response {
    respond(blocking(&s, |m| m.list()).await)
}

async fn view(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    respond(blocking(&s, move |m| m.view(&id)).await)
}

async fn recommendation(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    respond(blocking(&s, move |m| m.recommend(&id)).await)
}

/// `count` is signed so negative input gets its own error code rather than
/// a generic decoding failure.
#[derive(Debug, Clone, Deserialize)]
pub struct ObservationRequest {
    pub filter_id: String,
    pub count: i64,
}

async fn observe(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ObservationRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let req = match body {
        Ok(Json(r)) => r,
        Err(e) => return ServiceError::BadRequest(e.body_text()).into_response(),
    };
    respond(blocking(&s, move |m| m.observe(&id, &req.filter_id, req.count)).await)
}

#[derive(Debug, Clone, Deserialize)]
pub struct PosteriorQuery {
    pub level: Option<f64>,
}

async fn posterior(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<PosteriorQuery>) -> Response {
    let level = q.level.unwrap_or(seqdesign_core::smc::SUMMARY_LEVEL);
    respond(blocking(&s, move |m| m.posterior(&id, level)).await)
}

async fn history(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    respond(blocking(&s, move |m| m.history(&id)).await)
}

fn respond<T: Serialize>(r: ServiceResult<T>) -> Response {
    match r {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn api_not_found(uri: axum::http::Uri) -> Response {
    ServiceError::NoRoute(uri.path().to_string()).into_response()
}

/// The API router; static files from `ui_dir` are served for all other
/// paths when given.
pub fn router(manager: Arc<SessionManager>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(list).post(create))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/recommendation", get(recommendation))
        .route("/sessions/{id}/observations", axum::routing::post(observe))
        .route("/sessions/{id}/posterior", get(posterior))
        .route("/sessions/{id}/history", get(history))
        .with_state(AppState { manager });
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(api_not_found),
    }
}

/// Bind and serve until Ctrl-C.
pub async fn serve(manager: Arc<SessionManager>, bind: &str, ui_dir: Option<PathBuf>) -> ServiceResult<()> {
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| {
        ServiceError::BadRequest(if e.kind() == std::io::ErrorKind::AddrInUse {
            format!("address {bind} is already in use")
        } else {
            format!("cannot bind {bind}: {e}")
        })
    })?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(manager, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

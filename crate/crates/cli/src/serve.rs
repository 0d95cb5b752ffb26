//! The scan endpoint.
//!
//! `POST /scan` takes the raw file as the request body (name from the
//! `filename` query parameter or `X-Filename` header) and answers with a
//! [`ScanResponse`]. `GET /reports/{id}` returns the stored full report.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use aidr_core::malwarelab::{MalwareBundle, Report};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::malware::{scan_bytes, ScanOutcome};

pub const MAX_UPLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResponse {
    pub filename: String,
    pub verdict: String,
    pub rf_probability: f64,
    pub lstm_probability: Option<f64>,
    pub report_id: String,
}

impl ScanResponse {
    pub fn new(filename: &str, r: &Report) -> Self {
        ScanResponse {
            filename: filename.to_owned(),
            verdict: r.verdict.label.as_str().to_owned(),
            rf_probability: r.verdict.rf_probability,
            lstm_probability: r.verdict.lstm_probability,
            report_id: r.report_id.clone(),
        }
    }
}

pub struct AppState {
    bundle: MalwareBundle,
    reports: RwLock<HashMap<String, Report>>,
    report_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(bundle: MalwareBundle, report_dir: Option<PathBuf>) -> Self {
        AppState {
            bundle,
            reports: RwLock::new(HashMap::new()),
            report_dir,
        }
    }
}

pub fn store_report(dir: &Path, r: &Report) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.json", r.report_id)), r.to_json())
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct ScanQuery {
    filename: Option<String>,
}

async fn scan(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ScanQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<ScanResponse>, ApiError> {
    if body.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "empty request body".into()));
    }
    let name = q
        .filename
        .or_else(|| {
            headers
                .get("x-filename")
                .and_then(|v| v.to_str().ok())
                .map(str::to_owned)
        })
        .unwrap_or_else(|| "upload".into());
    let st = state.clone();
    let outcome = tokio::task::spawn_blocking(move || scan_bytes(&st.bundle, &name, &body))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("scan task failed: {e}")))?;
    match outcome {
        Ok(ScanOutcome::Verdict(resp, report)) => {
            if let Some(dir) = &state.report_dir {
                if let Err(e) = store_report(dir, &report) {
                    log::error!("storing report {}: {e}", report.report_id);
                }
            }
            state
                .reports
                .write()
                .unwrap_or_else(|e| e.into_inner())
                .insert(report.report_id.clone(), *report);
            Ok(Json(resp))
        }
        Ok(ScanOutcome::Skipped(why)) => Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, why)),
        Err(e) => Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())),
    }
}

async fn report(
    State(state): State<Arc<AppState>>,
    axum::extract::Path(id): axum::extract::Path<String>,
) -> Result<Json<Report>, ApiError> {
    if let Some(r) = state.reports.read().unwrap_or_else(|e| e.into_inner()).get(&id) {
        return Ok(Json(r.clone()));
    }
    let not_found = || ApiError(StatusCode::NOT_FOUND, format!("no report {id}"));
    if !id.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(not_found());
    }
    let dir = state.report_dir.as_ref().ok_or_else(not_found)?;
    let text = std::fs::read_to_string(dir.join(format!("{id}.json"))).map_err(|_| not_found())?;
    serde_json::from_str(&text).map(Json).map_err(|e| {
        ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("stored report unreadable: {e}"),
        )
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scan", post(scan))
        .route("/reports/{id}", get(report))
        .route("/health", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, bundle: MalwareBundle, report_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let app = router(Arc::new(AppState::new(bundle, report_dir)));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

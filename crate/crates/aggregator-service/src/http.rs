use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use measurement_core::{
    DescriptorQuery, MeasurementRecord, MetricKind, RecordBatch, RecordQuery,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::error::StoreError;
use crate::store::Store;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    token: Option<String>,
}

impl AppState {
    pub fn new(store: Store, token: Option<String>) -> AppState {
        AppState {
            store: Arc::new(Mutex::new(store)),
            token,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ApiError {
    error: String,
}

enum Failure {
    Store(StoreError),
    BadRequest(String),
    Unauthorized,
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::Store(e)
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            Failure::Store(e) if e.is_client_error() => (StatusCode::BAD_REQUEST, e.to_string()),
            Failure::Store(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            Failure::BadRequest(message) => (StatusCode::BAD_REQUEST, message),
            Failure::Unauthorized => (StatusCode::UNAUTHORIZED, "missing or bad token".into()),
        };
        (status, Json(ApiError { error: message })).into_response()
    }
}

fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), Failure> {
    let Some(expected) = &state.token else {
        return Ok(());
    };
    let presented = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(Failure::Unauthorized)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/measurements", post(submit_batch).get(query_records))
        .route("/v1/self", post(ingest_self))
        .route("/v1/export", get(export))
        .with_state(state)
}

/// Binds and serves until the task is aborted. Returns the bound address
/// and the server task handle.
pub async fn serve(
    state: AppState,
    bind: SocketAddr,
) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let app = router(state);
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("aggregator server stopped: {e}");
        }
    });
    Ok((addr, task))
}

async fn health() -> &'static str {
    "ok"
}

async fn submit_batch(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(batch): Json<RecordBatch>,
) -> Result<impl IntoResponse, Failure> {
    authorize(&state, &headers)?;
    let idempotency_key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let store = Arc::clone(&state.store);
    let batch_id = tokio::task::spawn_blocking(move || {
        store
            .lock()
            .unwrap()
            .submit_batch(&batch, idempotency_key.as_deref())
    })
    .await
    .map_err(|e| Failure::BadRequest(format!("task failed: {e}")))??;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "batch_id": batch_id.to_string() })),
    ))
}

async fn ingest_self(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
    Json(record): Json<MeasurementRecord>,
) -> Result<impl IntoResponse, Failure> {
    authorize(&state, &headers)?;
    let submitter = params.get("submitter").cloned().unwrap_or_default();
    let idempotency_key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let store = Arc::clone(&state.store);
    let id = tokio::task::spawn_blocking(move || {
        store
            .lock()
            .unwrap()
            .ingest_self(&record, &submitter, idempotency_key.as_deref())
    })
    .await
    .map_err(|e| Failure::BadRequest(format!("task failed: {e}")))??;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn query_records(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<Vec<MeasurementRecord>>, Failure> {
    authorize(&state, &headers)?;
    let filter = record_query_from_params(&params).map_err(Failure::BadRequest)?;
    let store = Arc::clone(&state.store);
    let records =
        tokio::task::spawn_blocking(move || store.lock().unwrap().query(&filter))
            .await
            .map_err(|e| Failure::BadRequest(format!("task failed: {e}")))??;
    Ok(Json(records))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportResponse {
    pub directory: String,
    pub manifest: trace_library::Manifest,
}

async fn export(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<ExportResponse>, Failure> {
    authorize(&state, &headers)?;
    let dest = params
        .get("dest")
        .ok_or_else(|| Failure::BadRequest("missing `dest` query parameter".into()))?;
    let dest = PathBuf::from(dest);
    let filter = record_query_from_params(&params).map_err(Failure::BadRequest)?;
    let store = Arc::clone(&state.store);
    let outcome =
        tokio::task::spawn_blocking(move || store.lock().unwrap().export(&filter, &dest))
            .await
            .map_err(|e| Failure::BadRequest(format!("task failed: {e}")))??;
    Ok(Json(ExportResponse {
        directory: outcome.directory.display().to_string(),
        manifest: outcome.manifest,
    }))
}

/// Parses the query-parameter encoding of a [`RecordQuery`]. The same
/// vocabulary is produced by [`record_query_to_params`].
pub fn record_query_from_params(
    params: &HashMap<String, String>,
) -> Result<RecordQuery, String> {
    let mut descriptor = DescriptorQuery::default();
    if let Some(v) = params.get("method") {
        descriptor.method = Some(v.parse().map_err(|e| format!("{e}"))?);
    }
    if let Some(v) = params.get("metric") {
        let metric = MetricKind::parse(v, params.get("metric_label").map(String::as_str))
            .map_err(|e| format!("{e}"))?;
        descriptor.metric = Some(metric);
    }
    if let Some(v) = params.get("segment") {
        descriptor.segment = Some(v.parse().map_err(|e| format!("{e}"))?);
    }
    if let Some(v) = params.get("direction") {
        descriptor.direction = Some(v.parse().map_err(|e| format!("{e}"))?);
    }
    if let Some(v) = params.get("access_technology") {
        descriptor.access_technology = Some(v.parse().map_err(|e| format!("{e}"))?);
    }
    if let Some(v) = params.get("cross_traffic_mbps") {
        descriptor.cross_traffic_mbps =
            Some(v.parse().map_err(|e| format!("cross_traffic_mbps: {e}"))?);
    }
    if let Some(v) = params.get("num_clients") {
        descriptor.num_clients = Some(v.parse().map_err(|e| format!("num_clients: {e}"))?);
    }
    let mut filter = RecordQuery {
        descriptor,
        ..Default::default()
    };
    if let Some(v) = params.get("from_us") {
        filter.from_us = Some(v.parse().map_err(|e| format!("from_us: {e}"))?);
    }
    if let Some(v) = params.get("to_us") {
        filter.to_us = Some(v.parse().map_err(|e| format!("to_us: {e}"))?);
    }
    if let Some(v) = params.get("run_id") {
        filter.run_id = Some(v.clone());
    }
    filter.validate().map_err(|e| e.to_string())?;
    Ok(filter)
}

/// Encodes a [`RecordQuery`] as query parameters.
pub fn record_query_to_params(filter: &RecordQuery) -> Vec<(String, String)> {
    let mut params = Vec::new();
    let d = &filter.descriptor;
    if let Some(method) = d.method {
        params.push(("method".into(), method.to_string()));
    }
    if let Some(metric) = &d.metric {
        match metric {
            MetricKind::SelfMetric(label) => {
                params.push(("metric".into(), "self_metric".into()));
                params.push(("metric_label".into(), label.clone()));
            }
            other => params.push(("metric".into(), other.to_string())),
        }
    }
    if let Some(segment) = d.segment {
        params.push(("segment".into(), segment.to_string()));
    }
    if let Some(direction) = d.direction {
        params.push(("direction".into(), direction.to_string()));
    }
    if let Some(tech) = d.access_technology {
        params.push(("access_technology".into(), tech.to_string()));
    }
    if let Some(cross) = d.cross_traffic_mbps {
        params.push(("cross_traffic_mbps".into(), cross.to_string()));
    }
    if let Some(clients) = d.num_clients {
        params.push(("num_clients".into(), clients.to_string()));
    }
    if let Some(from) = filter.from_us {
        params.push(("from_us".into(), from.to_string()));
    }
    if let Some(to) = filter.to_us {
        params.push(("to_us".into(), to.to_string()));
    }
    if let Some(run_id) = &filter.run_id {
        params.push(("run_id".into(), run_id.clone()));
    }
    params
}

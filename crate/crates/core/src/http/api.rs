use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::domain::Digest;
use crate::inference::{FeedbackRecord, InferenceError, InferenceService, PredictionRequest};
use crate::monitoring::Monitor;
use crate::registry::{get_lineage, RegistryError, ServingError, Stage};
use crate::Platform;

pub const API_KEY_HEADER: &str = "x-api-key";

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub service: Arc<InferenceService>,
    pub monitor: Arc<Monitor>,
    pub api_key: Option<String>,
}

/// A JSON error body with its status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
    retry_after: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl ToString) -> Self {
        ApiError { status, body: json!({ "error": kind, "message": message.to_string() }), retry_after: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(self.body)).into_response();
        if let Some(s) = self.retry_after {
            resp.headers_mut().insert("retry-after", HeaderValue::from(s));
        }
        resp
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let kind = match &e {
            InferenceError::Unauthorized => "unauthorized",
            InferenceError::NoModel(_) => "no_model",
            InferenceError::NotFound(_) => "not_found",
            InferenceError::FeatureMiss(_) => "feature_miss",
            InferenceError::Serving(_) => "serving",
            InferenceError::BadRequest(_) => "bad_request",
            InferenceError::Internal(_) => "internal",
        };
        let mut err = ApiError::new(status, kind, &e);
        match e {
            InferenceError::FeatureMiss(names) => err.body["missing"] = json!(names),
            InferenceError::Serving(ServingError::Unavailable { retry_after_secs, .. }) => {
                err.body["retry_after_secs"] = json!(retry_after_secs);
                err.retry_after = Some(retry_after_secs);
            }
            _ => {}
        }
        err
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let (status, kind) = match &e {
            RegistryError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            RegistryError::NoModel(_) => (StatusCode::NOT_FOUND, "no_model"),
            RegistryError::Transition { .. } => (StatusCode::CONFLICT, "transition"),
            RegistryError::Spec(_) => (StatusCode::UNPROCESSABLE_ENTITY, "spec"),
            RegistryError::Integrity(_) => (StatusCode::UNPROCESSABLE_ENTITY, "integrity"),
            RegistryError::Corruption(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corruption"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, kind, e)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking work (file appends, remote scoring) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?
}

async fn require_key(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(key) = &s.api_key {
        let presented = req.headers().get(API_KEY_HEADER).and_then(|v| v.to_str().ok());
        if presented != Some(key.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid X-API-Key").into_response();
        }
    }
    next.run(req).await
}

fn presented_key(headers: &HeaderMap) -> Option<String> {
    headers.get(API_KEY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string)
}

pub fn router(state: AppState) -> Router {
    let mutating = Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/feedback", post(feedback))
        .route("/v1/models/{model_id}/versions/{version}/stage", post(transition))
        .route("/v1/monitor/run", post(monitor_run))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_key));
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/predictions/{request_id}", get(get_prediction))
        .route("/v1/models", get(list_models))
        .route("/v1/models/{model_id}/versions/{version}", get(get_model))
        .route("/v1/provenance/{digest}", get(provenance))
        .route("/v1/monitor/alerts", get(alerts))
        .route("/v1/audit", get(audit))
        .merge(mutating)
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "patients": s.platform.timelines.len(),
        "features": s.platform.features.catalog_len(),
        "predictions": s.platform.predictions.len(),
    }))
}

async fn predict(State(s): State<AppState>, headers: HeaderMap, Json(req): Json<PredictionRequest>) -> Response {
    let key = presented_key(&headers);
    let svc = s.service.clone();
    match blocking(move || svc.predict(&req, key.as_deref()).map_err(ApiError::from)).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn feedback(State(s): State<AppState>, headers: HeaderMap, Json(fb): Json<FeedbackRecord>) -> Response {
    let key = presented_key(&headers);
    let svc = s.service.clone();
    match blocking(move || svc.submit_feedback(fb, key.as_deref()).map_err(ApiError::from)).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_prediction(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.service.get_prediction(&id) {
        Ok(r) => Json(r).into_response(),
        Err(e) => ApiError::from(e).into_response(),
    }
}

#[derive(Deserialize)]
struct ModelsQuery {
    task_id: Option<String>,
}

async fn list_models(State(s): State<AppState>, Query(q): Query<ModelsQuery>) -> Response {
    let reg = s.platform.registry.clone();
    let res = blocking(move || {
        reg.refresh()?;
        Ok(reg.list(q.task_id.as_deref()))
    })
    .await;
    match res {
        Ok(list) => Json(list).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_model(State(s): State<AppState>, Path((model_id, version)): Path<(String, u32)>) -> Response {
    match s.platform.registry.get(&model_id, version) {
        Some(m) => Json(m).into_response(),
        None => ApiError::from(RegistryError::NotFound(format!("model {model_id} v{version}"))).into_response(),
    }
}

#[derive(Deserialize)]
struct StageBody {
    to: String,
    #[serde(default)]
    actor: Option<String>,
}

async fn transition(
    State(s): State<AppState>,
    Path((model_id, version)): Path<(String, u32)>,
    Json(body): Json<StageBody>,
) -> Response {
    let to: Stage = match body.to.parse() {
        Ok(t) => t,
        Err(e) => return ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e).into_response(),
    };
    let reg = s.platform.registry.clone();
    let actor = body.actor.unwrap_or_else(|| "api".into());
    match blocking(move || Ok(reg.transition_stage(&model_id, version, to, &actor)?)).await {
        Ok(spec) => Json(spec).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn provenance(State(s): State<AppState>, Path(digest): Path<String>) -> Response {
    let digest: Digest = match digest.parse() {
        Ok(d) => d,
        Err(e) => return ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e).into_response(),
    };
    let p = s.platform.clone();
    match blocking(move || Ok(get_lineage(p.registry.blobs(), &digest, Some(&p.features))?)).await {
        Ok(l) => Json(l).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct AlertsQuery {
    since: Option<DateTime<Utc>>,
}

async fn alerts(State(s): State<AppState>, Query(q): Query<AlertsQuery>) -> Response {
    Json(s.monitor.alerts().list(q.since)).into_response()
}

async fn monitor_run(State(s): State<AppState>) -> Response {
    let m = s.monitor.clone();
    let res = blocking(move || {
        m.evaluate_and_notify()
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "monitor", e))
    })
    .await;
    match res {
        Ok(run) => Json(run).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn audit(State(s): State<AppState>) -> ApiResult<Vec<crate::registry::StageTransition>> {
    Ok(Json(s.platform.registry.audit_log()))
}

//! Remote model runner: serves one linear artifact at `POST /score`.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;

use crate::features::FeatureRef;
use crate::registry::{score_linear, ModelArtifact, RemoteScoreRequest};

#[derive(Debug)]
struct Runner {
    artifact: ModelArtifact,
    feature_refs: Vec<FeatureRef>,
}

/// Router for the runner wire contract. Dimension or feature-order
/// mismatches answer 422.
pub fn runner_router(artifact: ModelArtifact, feature_refs: Vec<FeatureRef>) -> Router {
    Router::new()
        .route("/score", post(score))
        .with_state(Arc::new(Runner { artifact, feature_refs }))
}

async fn score(State(r): State<Arc<Runner>>, Json(req): Json<RemoteScoreRequest>) -> Response {
    let expected = r.artifact.coefficients.len();
    let got = req.entries.len();
    if got != expected {
        return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": "dimension_mismatch", "expected": expected, "got": got })))
            .into_response();
    }
    let order_ok = req
        .entries
        .iter()
        .zip(&r.feature_refs)
        .all(|(e, f)| e.feature_name == f.name && e.feature_version == f.version);
    if !order_ok && !r.feature_refs.is_empty() {
        return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": "feature_mismatch", "expected": expected, "got": got })))
            .into_response();
    }
    let x: Option<Vec<f64>> = req.entries.iter().map(|e| e.value.model_input()).collect();
    let Some(x) = x else {
        return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": "non_numeric" }))).into_response();
    };
    match score_linear(&r.artifact, &x) {
        Ok(s) => Json(s).into_response(),
        Err(e) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

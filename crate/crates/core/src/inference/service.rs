use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use parking_lot::RwLock;
use serde_json::{json, Value};

use super::logs::{FeedbackLog, PredictionLog};
use super::types::{FeedbackReceipt, FeedbackRecord, LoggedRequest, PredictionRecord, PredictionRequest};
use super::InferenceError;
use crate::domain::Digest;
use crate::features::{FeatureError, FeatureRepository, FeatureVector};
use crate::ingest::TimelineStore;
use crate::registry::{ModelRegistry, ModelSpec, ProvenanceRecord, RegistryError, Scorer};
use crate::training::{FEATURE_IMPORTANCE_TOPK, PROVENANCE_SUMMARY};

pub const TOP_K: usize = 5;

/// The inference framework: model lookup, as-of feature assembly, scoring,
/// metadata generation and request logging.
#[derive(Debug)]
pub struct InferenceService {
    registry: Arc<ModelRegistry>,
    features: Arc<FeatureRepository>,
    timelines: Arc<TimelineStore>,
    scorer: Scorer,
    predictions: Arc<PredictionLog>,
    feedback: Arc<FeedbackLog>,
    api_key: Option<String>,
    provenance: RwLock<HashMap<Digest, Arc<ProvenanceRecord>>>,
}

impl InferenceService {
    pub fn new(
        registry: Arc<ModelRegistry>,
        features: Arc<FeatureRepository>,
        timelines: Arc<TimelineStore>,
        predictions: Arc<PredictionLog>,
        feedback: Arc<FeedbackLog>,
    ) -> Self {
        InferenceService {
            scorer: Scorer::new(registry.blobs().clone()),
            registry,
            features,
            timelines,
            predictions,
            feedback,
            api_key: None,
            provenance: RwLock::default(),
        }
    }

    /// Requires callers to present `key`. Without one every caller is accepted.
    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key.filter(|k| !k.is_empty());
        self
    }

    pub fn registry(&self) -> &Arc<ModelRegistry> {
        &self.registry
    }

    pub fn features(&self) -> &Arc<FeatureRepository> {
        &self.features
    }

    pub fn timelines(&self) -> &Arc<TimelineStore> {
        &self.timelines
    }

    pub fn predictions(&self) -> &Arc<PredictionLog> {
        &self.predictions
    }

    pub fn feedback(&self) -> &Arc<FeedbackLog> {
        &self.feedback
    }

    pub fn authorize(&self, presented: Option<&str>) -> Result<(), InferenceError> {
        match &self.api_key {
            Some(k) if presented != Some(k.as_str()) => Err(InferenceError::Unauthorized),
            _ => Ok(()),
        }
    }

    /// Serves one prediction and logs it before returning.
    ///
    /// Blocks on remote scoring for http handles.
    pub fn predict(&self, req: &PredictionRequest, api_key: Option<&str>) -> Result<PredictionRecord, InferenceError> {
        let started = Instant::now();
        self.authorize(api_key.or(req.api_key.as_deref()))?;

        let spec = self.registry.get_best_model(&req.task_id).map_err(|e| match e {
            RegistryError::NoModel(t) => InferenceError::NoModel(t),
            other => InferenceError::Internal(other.to_string()),
        })?;

        let timeline = self.timelines.get(&req.patient_id);
        let (vector, origins) = self
            .features
            .get_vector_asof(timeline.as_deref(), &req.patient_id, &spec.feature_refs, req.as_of_date, req.feature_policy)
            .map_err(|e| match e {
                FeatureError::Miss(names) => InferenceError::FeatureMiss(names),
                FeatureError::MissingTimeline(p) => InferenceError::NotFound(format!("patient {p}")),
                other => InferenceError::Internal(other.to_string()),
            })?;

        let score = self.scorer.score(&spec.serving_handle, &vector).map_err(InferenceError::Serving)?;

        let metadata = spec
            .metadata_generator_ids
            .iter()
            .map(|id| (id.clone(), self.metadata(id, &spec, &vector)))
            .collect();

        let record = PredictionRecord {
            request_id: uuid::Uuid::new_v4().to_string(),
            request: LoggedRequest::from(req),
            model_id: spec.model_id.clone(),
            model_version: spec.version,
            vector_digest: vector.vector_digest.clone(),
            entries: vector.entries,
            raw_score: score.raw,
            probability: score.probability,
            decision: u8::from(score.probability > spec.decision_threshold()),
            metadata,
            origin_flags: origins,
            served_at: Utc::now(),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        self.predictions.append(&record)?;
        Ok(record)
    }

    fn metadata(&self, generator_id: &str, spec: &ModelSpec, vector: &FeatureVector) -> Value {
        let result = match generator_id {
            FEATURE_IMPORTANCE_TOPK => self.top_contributions(spec, vector),
            PROVENANCE_SUMMARY => self.provenance_summary(spec),
            other => Err(format!("unknown metadata generator {other:?}")),
        };
        result.unwrap_or_else(|e| json!({ "error": e }))
    }

    /// The `TOP_K` largest |coefficient·value| terms, signed, ties by name.
    fn top_contributions(&self, spec: &ModelSpec, vector: &FeatureVector) -> Result<Value, String> {
        let artifact = self.scorer.artifact(&spec.artifact_digest).map_err(|e| e.to_string())?;
        let x = vector.numeric_values().map_err(|e| e.to_string())?;
        let mut terms: Vec<(&str, f64, f64)> = vector
            .entries
            .iter()
            .zip(&artifact.coefficients)
            .zip(&x)
            .map(|((e, w), v)| (e.feature_name.as_str(), w * v, *v))
            .collect();
        terms.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(b.0)));
        Ok(Value::Array(
            terms
                .into_iter()
                .take(TOP_K)
                .map(|(f, c, v)| json!({ "feature": f, "contribution": c, "value": v }))
                .collect(),
        ))
    }

    fn provenance_summary(&self, spec: &ModelSpec) -> Result<Value, String> {
        let cached = self.provenance.read().get(&spec.provenance_ref).cloned();
        let record = match cached {
            Some(r) => r,
            None => {
                let r = Arc::new(self.registry.provenance(&spec.provenance_ref).map_err(|e| e.to_string())?);
                self.provenance.write().insert(spec.provenance_ref.clone(), r.clone());
                r
            }
        };
        Ok(json!({
            "provenance_ref": spec.provenance_ref,
            "algorithm": record.algorithm,
            "metrics": record.metrics,
        }))
    }

    pub fn submit_feedback(&self, fb: FeedbackRecord, api_key: Option<&str>) -> Result<FeedbackReceipt, InferenceError> {
        self.authorize(api_key)?;
        if !self.predictions.contains(&fb.request_id) {
            return Err(InferenceError::NotFound(format!("request {}", fb.request_id)));
        }
        self.feedback.submit(fb)
    }

    pub fn get_prediction(&self, request_id: &str) -> Result<PredictionRecord, InferenceError> {
        self.predictions.get(request_id).ok_or_else(|| InferenceError::NotFound(format!("request {request_id}")))
    }

    /// Metrics registered with a model, for callers that only hold a record.
    pub fn model_metrics(&self, model_id: &str, version: u32) -> Option<BTreeMap<String, f64>> {
        self.registry.get(model_id, version).map(|s| s.metrics)
    }
}

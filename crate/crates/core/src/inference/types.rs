use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::Digest;
use crate::features::{Origin, VectorEntry, VectorPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub task_id: String,
    pub patient_id: String,
    pub as_of_date: NaiveDate,
    #[serde(default)]
    pub feature_policy: VectorPolicy,
    /// Accepted in request bodies; never logged.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

impl PredictionRequest {
    pub fn new(task_id: &str, patient_id: &str, as_of_date: NaiveDate) -> Self {
        PredictionRequest {
            task_id: task_id.into(),
            patient_id: patient_id.into(),
            as_of_date,
            feature_policy: VectorPolicy::default(),
            api_key: None,
        }
    }

    pub fn with_policy(mut self, policy: VectorPolicy) -> Self {
        self.feature_policy = policy;
        self
    }
}

/// The request as logged: everything but the credential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub task_id: String,
    pub patient_id: String,
    pub as_of_date: NaiveDate,
    pub feature_policy: VectorPolicy,
}

impl From<&PredictionRequest> for LoggedRequest {
    fn from(r: &PredictionRequest) -> Self {
        LoggedRequest {
            task_id: r.task_id.clone(),
            patient_id: r.patient_id.clone(),
            as_of_date: r.as_of_date,
            feature_policy: r.feature_policy,
        }
    }
}

/// One served prediction. Immutable once logged.
///
/// `entries` keeps the scored vector so drift can be measured per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub request_id: String,
    pub request: LoggedRequest,
    pub model_id: String,
    pub model_version: u32,
    pub vector_digest: Digest,
    pub entries: Vec<VectorEntry>,
    pub raw_score: f64,
    pub probability: f64,
    pub decision: u8,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub origin_flags: Vec<Origin>,
    pub served_at: DateTime<Utc>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub request_id: String,
    pub observed_outcome: u8,
    #[serde(default)]
    pub workflow_state: String,
    /// Filled in on receipt when absent.
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

impl FeedbackRecord {
    pub fn new(request_id: &str, observed_outcome: u8, workflow_state: &str) -> Self {
        FeedbackRecord {
            request_id: request_id.into(),
            observed_outcome,
            workflow_state: workflow_state.into(),
            submitted_at: None,
        }
    }

    /// Same outcome and workflow state; submission time is not part of the payload identity.
    pub fn same_payload(&self, other: &FeedbackRecord) -> bool {
        self.request_id == other.request_id
            && self.observed_outcome == other.observed_outcome
            && self.workflow_state == other.workflow_state
    }
}

/// A stored feedback submission; later versions for a request supersede earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFeedback {
    pub feedback_version: u32,
    #[serde(flatten)]
    pub record: FeedbackRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackReceipt {
    pub request_id: String,
    pub feedback_version: u32,
    pub created: bool,
}

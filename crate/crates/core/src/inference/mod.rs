//! Request flow for predictions, plus the prediction and feedback logs.

mod logs;
mod service;
mod types;

use thiserror::Error;

pub use logs::{FeedbackLog, PredictionLog};
pub use service::{InferenceService, TOP_K};
pub use types::{
    FeedbackReceipt, FeedbackRecord, LoggedRequest, PredictionRecord, PredictionRequest, StoredFeedback,
};

use crate::registry::ServingError;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("missing or invalid API key")]
    Unauthorized,
    #[error("no Production model for task {0:?}")]
    NoModel(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("features not precomputed: {}", .0.join(", "))]
    FeatureMiss(Vec<String>),
    #[error("serving failed: {0}")]
    Serving(#[from] ServingError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl InferenceError {
    pub(crate) fn storage(e: crate::jsonl::JsonlError) -> Self {
        InferenceError::Internal(e.to_string())
    }

    /// HTTP status class for the error.
    pub fn status(&self) -> u16 {
        match self {
            InferenceError::Unauthorized => 401,
            InferenceError::NoModel(_) | InferenceError::NotFound(_) => 404,
            InferenceError::FeatureMiss(_) => 409,
            InferenceError::Serving(_) => 502,
            InferenceError::BadRequest(_) => 400,
            InferenceError::Internal(_) => 500,
        }
    }
}

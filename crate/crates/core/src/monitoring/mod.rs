//! Drift and accuracy monitoring over the prediction and feedback logs.

mod alerts;
mod drift;
mod profile;
mod psi;

use thiserror::Error;

pub use alerts::{Alert, AlertEvent, AlertKind, AlertLog, AlertView, ModelEvaluation, Monitor, MonitorRun, SUGGESTED_ACTION};
pub use drift::{
    detect_drift, retrospective_accuracy, AccuracyOutcome, DriftFinding, MonitorConfig, Severity, SCORE_TARGET,
};
pub use profile::{FeatureProfile, ProfileStore, ReferenceProfile};
pub use psi::{floor_and_normalize, psi, Histogram, DEFAULT_BINS, PROPORTION_FLOOR};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("metric error: {0}")]
    Metric(String),
    #[error("profile error: {0}")]
    Profile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

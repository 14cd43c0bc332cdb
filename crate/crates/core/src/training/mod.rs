//! Logistic regression training, calibration, evaluation and the
//! end-to-end training pipeline.

mod importance;
mod logreg;
mod metrics;
mod pipeline;

use thiserror::Error;

pub use importance::{permutation_importance, FeatureImportance, DEFAULT_REPEATS};
pub use logreg::{
    column_stats, fit_platt, gradient, objective, train_logreg, train_logreg_standardized, Hyperparameters, LinearModel,
    PLATT_MAX_ITER, PLATT_TOL,
};
pub use metrics::{accuracy, auc, brier};
pub use pipeline::{
    model_input, resolve_feature_refs, run_pipeline, CohortSource, EvalReport, PipelineContext, PipelineError,
    PipelineOutput, Split, TrainConfig, TrainingRow, ALGORITHM, FEATURE_IMPORTANCE_TOPK, PROVENANCE_SUMMARY,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate data: both classes are required")]
    SingleClass,
    #[error("training diverged to non-finite weights")]
    Diverged,
    #[error("calibration error: {0}")]
    Calibration(String),
}

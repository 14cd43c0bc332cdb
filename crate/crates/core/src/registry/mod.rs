//! Model registry: versioned model specs, a stage machine with an audit
//! trail, content-addressed provenance and artifacts, and scoring through
//! serving handles.

mod blobs;
mod lineage;
mod log;
mod serving;
mod types;

use thiserror::Error;

pub use blobs::{BlobStore, ContentAddressed};
pub use lineage::{get_lineage, Lineage, LineageCohort, LineageFeature};
pub use log::{ModelRegistry, RegisterOutcome, RegistryEvent, RunRecord, StageTransition, DEFAULT_PRIMARY_METRIC};
pub use serving::{score_linear, sigmoid, RemoteScoreRequest, Score, Scorer, ServingError, ServingHandle};
pub use types::{
    code_revision, Link, ModelArtifact, ModelSpec, ModelSpecDraft, PlattParams, ProvenanceFeature, ProvenanceRecord,
    Stage, DECISION_THRESHOLD, LINEAR_V1,
};

use crate::domain::{Digest, EncodingError};
use crate::jsonl::JsonlError;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("transition {from} -> {to} is not allowed for {model_id} v{version}")]
    Transition { model_id: String, version: u32, from: Stage, to: Stage },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("no registered model for task {0:?}")]
    NoModel(String),
    #[error("stored blob {0} failed verification")]
    Corruption(Digest),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Storage(#[from] JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

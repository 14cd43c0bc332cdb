use thiserror::Error;

use crate::features::FeatureError;
use crate::inference::InferenceError;
use crate::ingest::IngestError;
use crate::monitoring::MonitorError;
use crate::registry::{RegistryError, ServingError};
use crate::training::{PipelineError, TrainError};

/// Any domain error from the platform's modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Serving(#[from] ServingError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

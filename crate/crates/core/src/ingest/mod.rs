//! Data acquisition and cohort construction.

mod cohort;
mod files;
mod normalize;
mod synthetic;

use thiserror::Error;

pub use cohort::{build_cohort, label_for, split_cohort, IndexRule};
pub use files::{
    list_cohorts, load_cohort, load_timelines, save_cohort, save_events, save_timelines, CohortHeader,
    LoadedTimelines, PatientRecord, TimelineStore,
};
pub use normalize::{normalize_to_cdm, NormalizeOutput, RawSourceRecord, Reject, SourceMapping, SourceMappings};
pub use synthetic::{
    code_for, generate_synthetic, GeneratorConfig, RISK_FACTOR_CODE, SYNTHETIC_SOURCE, UNPLANNED_ADMISSION_CODE,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("config error: {0}")]
    Config(String),
    #[error("no source mapping registered for {0:?}")]
    UnknownSource(String),
    #[error("no patient yields an index date; cohort would be empty")]
    EmptyCohort,
    #[error("duplicate patient id {0}")]
    DuplicatePatient(String),
    #[error("timeline for {patient_id} is invalid: {violation}")]
    InvalidTimeline { patient_id: String, violation: String },
    #[error("cohort {0} not found")]
    CohortNotFound(String),
    #[error("corrupt cohort file {0}")]
    Corrupt(String),
    #[error(transparent)]
    Encoding(#[from] crate::domain::EncodingError),
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

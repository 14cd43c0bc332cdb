//! Predictive modelling over longitudinal patient event records.
//!
//! The crate covers the full model life cycle on one data root:
//!
//! - [`ingest`]: raw claim normalization, synthetic timelines, cohorts and splits
//! - [`features`]: a versioned feature catalog with point-in-time materialization
//! - [`training`]: a seeded logistic-regression pipeline with calibration
//! - [`registry`]: content-addressed artifacts, provenance and stage promotion
//! - [`inference`]: prediction and feedback logging behind an API key
//! - [`monitoring`]: feature, score and accuracy drift alerts
//! - [`http`]: the JSON API over all of the above
//!
//! [`Platform`] wires the stores together; the `lm` binary drives it from the shell.

pub mod cli;
pub mod demo;
pub mod domain;
mod error;
pub mod features;
pub mod http;
pub mod inference;
pub mod ingest;
pub mod jsonl;
pub mod monitoring;
pub mod platform;
pub mod registry;
mod rng;
pub mod training;
pub mod workspace;

pub use error::{Error, Result};
pub use platform::Platform;

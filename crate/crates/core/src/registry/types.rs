use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::blobs::ContentAddressed;
use crate::domain::{canonical_digest, Digest, EncodingError};
use crate::features::FeatureRef;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[default]
    None,
    Staging,
    Production,
    Archived,
}

impl Stage {
    pub fn can_transition_to(self, to: Stage) -> bool {
        matches!(
            (self, to),
            (Stage::None, Stage::Staging)
                | (Stage::Staging, Stage::Production)
                | (Stage::Production, Stage::Archived)
                | (Stage::Staging, Stage::Archived)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::None => "None",
            Stage::Staging => "Staging",
            Stage::Production => "Production",
            Stage::Archived => "Archived",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Stage::None),
            "staging" => Ok(Stage::Staging),
            "production" => Ok(Stage::Production),
            "archived" => Ok(Stage::Archived),
            _ => Err(format!("unknown stage {s:?}")),
        }
    }
}

/// What the caller supplies when registering; the registry assigns version,
/// stage and registration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecDraft {
    pub task_id: String,
    pub model_id: String,
    /// Empty means "serve the artifact in-process".
    #[serde(default)]
    pub serving_handle: String,
    pub feature_refs: Vec<FeatureRef>,
    #[serde(default)]
    pub metadata_generator_ids: Vec<String>,
    pub provenance_ref: Digest,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

/// Registry record binding a model version to its serving handle, ordered
/// feature references, metadata generators and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task_id: String,
    pub model_id: String,
    pub version: u32,
    pub stage: Stage,
    pub serving_handle: String,
    pub feature_refs: Vec<FeatureRef>,
    pub metadata_generator_ids: Vec<String>,
    pub provenance_ref: Digest,
    pub metrics: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub artifact_digest: Digest,
    pub registered_at: DateTime<Utc>,
    /// Position in the registry log; breaks registration-time ties.
    pub sequence: u64,
}

pub const DECISION_THRESHOLD: &str = "decision";

impl ModelSpec {
    /// Decision threshold, 0.5 when the spec does not set one.
    pub fn decision_threshold(&self) -> f64 {
        self.thresholds.get(DECISION_THRESHOLD).copied().unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Logit,
}

pub const LINEAR_V1: &str = "linear-v1";

/// Portable linear model: `raw = intercept + Σ coef·x`, probability through
/// the logit link, optionally Platt-adjusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub artifact_digest: Digest,
    pub format: String,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub link: Link,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PlattParams>,
}

#[derive(Serialize)]
struct ArtifactContent<'a> {
    format: &'a str,
    intercept: f64,
    coefficients: &'a [f64],
    link: Link,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<PlattParams>,
}

impl ModelArtifact {
    pub fn linear(intercept: f64, coefficients: Vec<f64>, calibration: Option<PlattParams>) -> Result<Self, EncodingError> {
        let mut a = ModelArtifact {
            artifact_digest: crate::domain::digest(b""),
            format: LINEAR_V1.to_string(),
            intercept,
            coefficients,
            link: Link::Logit,
            calibration,
        };
        a.artifact_digest = a.content_digest()?;
        Ok(a)
    }
}

impl ContentAddressed for ModelArtifact {
    fn declared_digest(&self) -> &Digest {
        &self.artifact_digest
    }

    fn content_digest(&self) -> Result<Digest, EncodingError> {
        canonical_digest(&ArtifactContent {
            format: &self.format,
            intercept: self.intercept,
            coefficients: &self.coefficients,
            link: self.link,
            calibration: self.calibration,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceFeature {
    pub name: String,
    pub version: u32,
    pub generator_id: String,
    pub params_digest: Digest,
}

/// Immutable lineage of a trained model.
///
/// `record_digest` covers every field except itself and `created_at`, so
/// re-running the same training on the same inputs yields the same record
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub record_digest: Digest,
    pub train_cohort_digest: Digest,
    pub test_cohort_digest: Digest,
    pub feature_definitions: Vec<ProvenanceFeature>,
    pub algorithm: String,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub metrics: BTreeMap<String, f64>,
    pub code_revision: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Serialize)]
struct ProvenanceContent<'a> {
    train_cohort_digest: &'a Digest,
    test_cohort_digest: &'a Digest,
    feature_definitions: &'a [ProvenanceFeature],
    algorithm: &'a str,
    hyperparameters: &'a BTreeMap<String, serde_json::Value>,
    metrics: &'a BTreeMap<String, f64>,
    code_revision: &'a str,
}

impl ProvenanceRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        train_cohort_digest: Digest,
        test_cohort_digest: Digest,
        feature_definitions: Vec<ProvenanceFeature>,
        algorithm: impl Into<String>,
        hyperparameters: BTreeMap<String, serde_json::Value>,
        metrics: BTreeMap<String, f64>,
        code_revision: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Result<Self, EncodingError> {
        let mut r = ProvenanceRecord {
            record_digest: crate::domain::digest(b""),
            train_cohort_digest,
            test_cohort_digest,
            feature_definitions,
            algorithm: algorithm.into(),
            hyperparameters,
            metrics,
            code_revision: code_revision.into(),
            created_at,
        };
        r.record_digest = r.content_digest()?;
        Ok(r)
    }
}

impl ContentAddressed for ProvenanceRecord {
    fn declared_digest(&self) -> &Digest {
        &self.record_digest
    }

    fn content_digest(&self) -> Result<Digest, EncodingError> {
        canonical_digest(&ProvenanceContent {
            train_cohort_digest: &self.train_cohort_digest,
            test_cohort_digest: &self.test_cohort_digest,
            feature_definitions: &self.feature_definitions,
            algorithm: &self.algorithm,
            hyperparameters: &self.hyperparameters,
            metrics: &self.metrics,
            code_revision: &self.code_revision,
        })
    }
}

/// Code revision recorded in provenance: `LM_CODE_REVISION` if set, else
/// the crate version.
pub fn code_revision() -> String {
    std::env::var("LM_CODE_REVISION").unwrap_or_else(|_| concat!("lm-core/", env!("CARGO_PKG_VERSION")).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allowed_transitions() {
        use Stage::*;
        let all = [None, Staging, Production, Archived];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .collect();
        assert_eq!(allowed, [(None, Staging), (Staging, Production), (Staging, Archived), (Production, Archived)]);
        assert_eq!("production".parse::<Stage>().unwrap(), Production);
    }

    #[test]
    fn artifact_digest_tracks_content() {
        let a = ModelArtifact::linear(0.5, vec![1.0, -2.0], None).unwrap();
        let b = ModelArtifact::linear(0.5, vec![1.0, -2.0], None).unwrap();
        let c = ModelArtifact::linear(0.5, vec![1.0, -2.0], Some(PlattParams { a: 1.0, b: 0.0 })).unwrap();
        assert_eq!(a.artifact_digest, b.artifact_digest);
        assert_ne!(a.artifact_digest, c.artifact_digest);
        assert_eq!(a.content_digest().unwrap(), a.artifact_digest);
    }

    #[test]
    fn provenance_digest_ignores_created_at() {
        let d = crate::domain::digest(b"x");
        let mk = |at| {
            ProvenanceRecord::new(d.clone(), d.clone(), vec![], "logreg_sgd", BTreeMap::new(), BTreeMap::new(), "r1", at)
                .unwrap()
        };
        let a = mk(Utc::now());
        let b = mk(Utc::now() + chrono::Duration::seconds(5));
        assert_eq!(a.record_digest, b.record_digest);
        let mut c = a.clone();
        c.algorithm = "other".into();
        assert_ne!(c.content_digest().unwrap(), a.record_digest);
    }
}

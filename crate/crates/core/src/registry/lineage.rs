use serde::{Deserialize, Serialize};

use super::blobs::BlobStore;
use super::types::ProvenanceRecord;
use super::RegistryError;
use crate::domain::{Cohort, Digest};
use crate::features::{FeatureDefinition, FeatureRef, FeatureRepository};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineageCohort {
    pub role: String,
    pub digest: Digest,
    /// Rows in the stored cohort; `None` when the blob is absent.
    pub n_rows: Option<usize>,
    pub n_positive: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineageFeature {
    pub feature: FeatureRef,
    pub generator_id: String,
    pub params_digest: Digest,
    /// The catalog definition, when the catalog still holds this version.
    pub definition: Option<FeatureDefinition>,
    /// The catalog definition hashes to the recorded params digest.
    pub params_match: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lineage {
    pub record: ProvenanceRecord,
    pub cohorts: Vec<LineageCohort>,
    pub features: Vec<LineageFeature>,
}

/// Loads a provenance record and resolves its cohort digests and feature
/// definitions. Missing blobs are reported, corrupted blobs are errors.
pub fn get_lineage(
    blobs: &BlobStore,
    record_digest: &Digest,
    features: Option<&FeatureRepository>,
) -> Result<Lineage, RegistryError> {
    let record: ProvenanceRecord = blobs.get_record(record_digest)?;
    let mut cohorts = Vec::new();
    for (role, digest) in [("train", &record.train_cohort_digest), ("test", &record.test_cohort_digest)] {
        let cohort = match blobs.get_record::<Cohort>(digest) {
            Ok(c) => Some(c),
            Err(RegistryError::NotFound(_)) => None,
            Err(e) => return Err(e),
        };
        cohorts.push(LineageCohort {
            role: role.into(),
            digest: digest.clone(),
            n_rows: cohort.as_ref().map(|c| c.rows.len()),
            n_positive: cohort.as_ref().map(|c| c.positives()),
        });
    }
    let features = record
        .feature_definitions
        .iter()
        .map(|f| {
            let feature = FeatureRef::new(f.name.clone(), f.version);
            let definition = features.and_then(|repo| repo.entry(&feature)).map(|e| e.definition);
            let params_match = definition
                .as_ref()
                .and_then(|d| d.params_digest().ok())
                .is_some_and(|d| d == f.params_digest);
            LineageFeature {
                feature,
                generator_id: f.generator_id.clone(),
                params_digest: f.params_digest.clone(),
                definition,
                params_match,
            }
        })
        .collect();
    Ok(Lineage { record, cohorts, features })
}

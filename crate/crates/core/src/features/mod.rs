//! Feature repository: a versioned catalog of feature definitions, the
//! generators that compute them, a point-in-time value store, and as-of
//! vector assembly shared by training and serving.

mod catalog;
mod generators;
mod preset;
mod repository;
mod schedule;
mod store;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{Catalog, CatalogEntry, RegistrationReceipt};
pub use generators::{
    AgeAtIndex, CodeIndicator, EventCountWindow, FeatureGenerator, GeneratorRegistry, SexIndicator, WeightedSum,
};
pub use repository::{
    CellFailure, FeatureRepository, MaterializeReport, Origin, TimelineRef, TimelineSource, VectorPolicy,
};
pub use preset::{standard_features, PLANTED_FEATURE};
pub use schedule::plan_stages;
pub use store::{FeatureStore, StoredValue};

use crate::domain::{canonical_digest, digest, write_f64, write_string, Digest, EncodingError};

pub type Params = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Numeric,
    Categorical,
}

/// A computed feature value. `Missing` encodes as null and enters models as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureScalar {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl FeatureScalar {
    /// The single imputation rule used by both training and serving.
    pub fn model_input(&self) -> Option<f64> {
        match self {
            FeatureScalar::Numeric(v) => Some(*v),
            FeatureScalar::Missing => Some(0.0),
            FeatureScalar::Categorical(_) => None,
        }
    }

    pub fn value_type(&self) -> Option<ValueType> {
        match self {
            FeatureScalar::Numeric(_) => Some(ValueType::Numeric),
            FeatureScalar::Categorical(_) => Some(ValueType::Categorical),
            FeatureScalar::Missing => None,
        }
    }
}

/// A (name, version) pointer into the catalog.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureRef {
    pub name: String,
    pub version: u32,
}

impl FeatureRef {
    pub fn new(name: impl Into<String>, version: u32) -> Self {
        FeatureRef { name: name.into(), version }
    }
}

impl fmt::Display for FeatureRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@v{}", self.name, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDefinition {
    pub name: String,
    /// Assigned by the catalog; ignored on registration.
    #[serde(default)]
    pub version: u32,
    pub generator_id: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub dependencies: Vec<String>,
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

impl FeatureDefinition {
    pub fn new(name: impl Into<String>, generator_id: impl Into<String>) -> Self {
        FeatureDefinition {
            name: name.into(),
            version: 0,
            generator_id: generator_id.into(),
            params: Params::new(),
            dependencies: Vec::new(),
            value_type: ValueType::Numeric,
            group_id: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn depends_on(mut self, names: &[&str]) -> Self {
        self.dependencies = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn group(mut self, group_id: &str) -> Self {
        self.group_id = Some(group_id.to_string());
        self
    }

    pub fn feature_ref(&self) -> FeatureRef {
        FeatureRef::new(self.name.clone(), self.version)
    }

    pub fn params_digest(&self) -> Result<Digest, EncodingError> {
        canonical_digest(&self.params)
    }
}

/// One stored, as-of-dated value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub patient_id: String,
    pub feature_name: String,
    pub feature_version: u32,
    pub as_of_date: NaiveDate,
    pub value: FeatureScalar,
    pub computed_at: chrono::DateTime<chrono::Utc>,
    /// Write sequence number, compared against staleness marks.
    pub generation: u64,
}

/// One (feature_name, feature_version, value) vector slot. Encodes as a
/// three-element array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, u32, FeatureScalar)", into = "(String, u32, FeatureScalar)")]
pub struct VectorEntry {
    pub feature_name: String,
    pub feature_version: u32,
    pub value: FeatureScalar,
}

impl From<(String, u32, FeatureScalar)> for VectorEntry {
    fn from((feature_name, feature_version, value): (String, u32, FeatureScalar)) -> Self {
        VectorEntry { feature_name, feature_version, value }
    }
}

impl From<VectorEntry> for (String, u32, FeatureScalar) {
    fn from(e: VectorEntry) -> Self {
        (e.feature_name, e.feature_version, e.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub patient_id: String,
    pub as_of_date: NaiveDate,
    pub entries: Vec<VectorEntry>,
    pub vector_digest: Digest,
}

/// The digested content of a vector; the reference shape for the direct writer.
#[cfg(test)]
#[derive(Serialize)]
struct VectorContent<'a> {
    patient_id: &'a str,
    as_of_date: NaiveDate,
    entries: &'a [VectorEntry],
}

/// Canonical bytes of `{as_of_date, entries, patient_id}`, written directly
/// rather than through a JSON value tree since this sits on the serving path.
fn vector_content_bytes(patient_id: &str, as_of_date: NaiveDate, entries: &[VectorEntry]) -> Result<Vec<u8>, EncodingError> {
    let mut out = Vec::with_capacity(64 + entries.len() * 32);
    out.extend_from_slice(b"{\"as_of_date\":");
    write_string(&as_of_date.format("%Y-%m-%d").to_string(), &mut out);
    out.extend_from_slice(b",\"entries\":[");
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        out.push(b'[');
        write_string(&e.feature_name, &mut out);
        out.push(b',');
        out.extend_from_slice(e.feature_version.to_string().as_bytes());
        out.push(b',');
        match &e.value {
            // serde_json lowers non-finite floats to null
            FeatureScalar::Numeric(v) if v.is_finite() => write_f64(*v, &mut out)?,
            FeatureScalar::Numeric(_) | FeatureScalar::Missing => out.extend_from_slice(b"null"),
            FeatureScalar::Categorical(c) => write_string(c, &mut out),
        }
        out.push(b']');
    }
    out.extend_from_slice(b"],\"patient_id\":");
    write_string(patient_id, &mut out);
    out.push(b'}');
    Ok(out)
}

impl FeatureVector {
    pub fn new(patient_id: String, as_of_date: NaiveDate, entries: Vec<VectorEntry>) -> Result<Self, EncodingError> {
        let vector_digest = digest(&vector_content_bytes(&patient_id, as_of_date, &entries)?);
        Ok(FeatureVector { patient_id, as_of_date, entries, vector_digest })
    }

    pub fn verify(&self) -> bool {
        vector_content_bytes(&self.patient_id, self.as_of_date, &self.entries)
            .map(|b| digest(&b) == self.vector_digest)
            .unwrap_or(false)
    }

    /// Model inputs in entry order, with missing values imputed to 0.
    pub fn numeric_values(&self) -> Result<Vec<f64>, FeatureError> {
        self.entries
            .iter()
            .map(|e| e.value.model_input().ok_or_else(|| FeatureError::NonNumeric(e.feature_name.clone())))
            .collect()
    }

    pub fn refs(&self) -> Vec<FeatureRef> {
        self.entries.iter().map(|e| FeatureRef::new(e.feature_name.clone(), e.feature_version)).collect()
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown generator {0:?}")]
    UnknownGenerator(String),
    #[error("invalid definition for {name}: {reason}")]
    InvalidDefinition { name: String, reason: String },
    #[error("dependency cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("feature {0} not found in catalog")]
    NotFound(String),
    #[error("precomputed values missing for: {}", .0.join(", "))]
    Miss(Vec<String>),
    #[error("feature {0} is not numeric")]
    NonNumeric(String),
    #[error("no timeline for patient {0}")]
    MissingTimeline(String),
    #[error("generator failed: {0}")]
    Generator(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Storage(#[from] crate::jsonl::JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::canonical_encode;

    #[test]
    fn scalar_encoding() {
        let v = vec![FeatureScalar::Numeric(2.0), FeatureScalar::Categorical("F".into()), FeatureScalar::Missing];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[2.0,"F",null]"#);
        let back: Vec<FeatureScalar> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vector_entries_encode_as_triples() {
        let v = FeatureVector::new(
            "p1".into(),
            "2021-01-01".parse().unwrap(),
            vec![VectorEntry { feature_name: "age".into(), feature_version: 1, value: FeatureScalar::Numeric(40.0) }],
        )
        .unwrap();
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json["entries"], serde_json::json!([["age", 1, 40.0]]));
        assert!(v.verify());
        assert_eq!(v.numeric_values().unwrap(), vec![40.0]);
    }

    #[test]
    fn direct_encoding_matches_canonical() {
        let entries = vec![
            VectorEntry { feature_name: "a\"b".into(), feature_version: 3, value: FeatureScalar::Numeric(37.0) },
            VectorEntry { feature_name: "c".into(), feature_version: 1, value: FeatureScalar::Numeric(-0.0) },
            VectorEntry { feature_name: "d".into(), feature_version: 1, value: FeatureScalar::Numeric(1.0e-7) },
            VectorEntry { feature_name: "e".into(), feature_version: 2, value: FeatureScalar::Numeric(0.1 + 0.2) },
            VectorEntry { feature_name: "f".into(), feature_version: 1, value: FeatureScalar::Numeric(f64::NAN) },
            VectorEntry { feature_name: "g".into(), feature_version: 1, value: FeatureScalar::Missing },
            VectorEntry { feature_name: "h".into(), feature_version: 1, value: FeatureScalar::Categorical("é\n".into()) },
            VectorEntry { feature_name: "i".into(), feature_version: 1, value: FeatureScalar::Numeric(3.5e21) },
        ];
        let date = "2021-03-04".parse().unwrap();
        let content = VectorContent { patient_id: "P\u{1}7", as_of_date: date, entries: &entries };
        let direct = vector_content_bytes("P\u{1}7", date, &entries).unwrap();
        assert_eq!(String::from_utf8(direct).unwrap(), String::from_utf8(canonical_encode(&content).unwrap()).unwrap());
    }

    #[test]
    fn categorical_is_not_a_model_input() {
        let v = FeatureVector::new(
            "p1".into(),
            "2021-01-01".parse().unwrap(),
            vec![VectorEntry { feature_name: "c".into(), feature_version: 1, value: FeatureScalar::Categorical("x".into()) }],
        )
        .unwrap();
        assert!(matches!(v.numeric_values(), Err(FeatureError::NonNumeric(_))));
    }
}

//! Mapping of heterogeneous source payloads onto [`ClaimEvent`].

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{ClaimEvent, EventType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSourceRecord {
    pub source_name: String,
    pub payload: BTreeMap<String, String>,
}

/// How one source's flat payload maps onto the common data model.
///
/// `code_keys` is checked in order; the first key present decides both the
/// code and the event type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMapping {
    pub source_name: String,
    pub patient_key: String,
    pub date_key: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub code_keys: Vec<(String, EventType)>,
    #[serde(default)]
    pub value_key: Option<String>,
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub index: usize,
    pub source_name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizeOutput {
    pub events: Vec<ClaimEvent>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, Default)]
pub struct SourceMappings {
    by_name: BTreeMap<String, SourceMapping>,
}

impl SourceMappings {
    /// `claims_v1` (pid/dt/dx|px|adm/amt) and `pharmacy_v1`
    /// (member/fill_date/ndc/cost).
    pub fn builtin() -> Self {
        let mut m = SourceMappings::default();
        m.register(SourceMapping {
            source_name: "claims_v1".into(),
            patient_key: "pid".into(),
            date_key: "dt".into(),
            date_format: default_date_format(),
            code_keys: vec![
                ("dx".into(), EventType::Diagnosis),
                ("px".into(), EventType::Procedure),
                ("adm".into(), EventType::Admission),
            ],
            value_key: Some("amt".into()),
        });
        m.register(SourceMapping {
            source_name: "pharmacy_v1".into(),
            patient_key: "member".into(),
            date_key: "fill_date".into(),
            date_format: default_date_format(),
            code_keys: vec![("ndc".into(), EventType::Pharmacy)],
            value_key: Some("cost".into()),
        });
        m
    }

    pub fn register(&mut self, mapping: SourceMapping) {
        self.by_name.insert(mapping.source_name.clone(), mapping);
    }

    /// Loads additional mappings from a JSON array file.
    pub fn load_file(&mut self, path: &Path) -> Result<(), IngestError> {
        let text = std::fs::read_to_string(path)?;
        let list: Vec<SourceMapping> =
            serde_json::from_str(&text).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        for m in list {
            self.register(m);
        }
        Ok(())
    }

    pub fn get(&self, source: &str) -> Option<&SourceMapping> {
        self.by_name.get(source)
    }
}

/// Converts raw records; unconvertible records are returned as rejects.
/// Output events are ordered by (patient_id, event_date, code).
pub fn normalize_to_cdm(
    records: &[RawSourceRecord],
    mappings: &SourceMappings,
) -> Result<NormalizeOutput, IngestError> {
    let mut out = NormalizeOutput::default();
    for (index, rec) in records.iter().enumerate() {
        let mapping = mappings
            .get(&rec.source_name)
            .ok_or_else(|| IngestError::UnknownSource(rec.source_name.clone()))?;
        match convert(rec, mapping) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.rejects.push(Reject { index, source_name: rec.source_name.clone(), reason }),
        }
    }
    out.events.sort_by(|a, b| {
        (&a.patient_id, a.event_date, &a.code).cmp(&(&b.patient_id, b.event_date, &b.code))
    });
    Ok(out)
}

fn convert(rec: &RawSourceRecord, m: &SourceMapping) -> Result<ClaimEvent, String> {
    let field = |key: &str| -> Result<&str, String> {
        rec.payload
            .get(key)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing_field:{key}"))
    };
    let patient_id = field(&m.patient_key)?;
    let raw_date = field(&m.date_key)?;
    let event_date = NaiveDate::parse_from_str(raw_date, &m.date_format)
        .map_err(|_| format!("invalid_date:{}", m.date_key))?;
    let (code, event_type) = m
        .code_keys
        .iter()
        .find_map(|(k, t)| field(k).ok().map(|c| (c, *t)))
        .ok_or_else(|| {
            let keys: Vec<&str> = m.code_keys.iter().map(|(k, _)| k.as_str()).collect();
            format!("missing_field:{}", keys.join("|"))
        })?;
    let value = match &m.value_key {
        Some(k) => match rec.payload.get(k).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(v) => Some(
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("invalid_value:{k}"))?,
            ),
            None => None,
        },
        None => None,
    };
    Ok(ClaimEvent {
        patient_id: patient_id.to_string(),
        event_date,
        event_type,
        code: code.to_string(),
        value,
        source: rec.source_name.clone(),
    })
}

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::canonical::{canonical_digest, EncodingError};
use super::digest::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Diagnosis,
    Procedure,
    Admission,
    Pharmacy,
}

impl EventType {
    pub const ALL: [EventType; 4] = [
        EventType::Diagnosis,
        EventType::Procedure,
        EventType::Admission,
        EventType::Pharmacy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Diagnosis => "diagnosis",
            EventType::Procedure => "procedure",
            EventType::Admission => "admission",
            EventType::Pharmacy => "pharmacy",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
    U,
}

/// One dated clinical or claims event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimEvent {
    pub patient_id: String,
    pub event_date: NaiveDate,
    pub event_type: EventType,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub source: String,
}

/// A patient's demographics plus their events in ascending date order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: String,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub events: Vec<ClaimEvent>,
}

impl PatientTimeline {
    /// Builds a timeline, stable-sorting events by date so same-day events
    /// keep their insertion order.
    pub fn new(
        patient_id: impl Into<String>,
        birth_date: NaiveDate,
        sex: Sex,
        mut events: Vec<ClaimEvent>,
    ) -> Self {
        events.sort_by_key(|e| e.event_date);
        PatientTimeline {
            patient_id: patient_id.into(),
            birth_date,
            sex,
            events,
        }
    }

    /// Appends an event, keeping the ordering invariant.
    pub fn push_event(&mut self, event: ClaimEvent) {
        let at = self.events.partition_point(|e| e.event_date <= event.event_date);
        self.events.insert(at, event);
    }

    /// Everything knowable on `as_of`: events dated on or before it.
    pub fn view_as_of(&self, as_of: NaiveDate) -> TimelineView<'_> {
        let end = self.events.partition_point(|e| e.event_date <= as_of);
        TimelineView {
            patient_id: &self.patient_id,
            birth_date: self.birth_date,
            sex: self.sex,
            events: &self.events[..end],
        }
    }
}

/// Point-in-time slice of a timeline. Feature generators only ever see this.
#[derive(Debug, Clone, Copy)]
pub struct TimelineView<'a> {
    pub patient_id: &'a str,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub events: &'a [ClaimEvent],
}

/// Target event definition: any event of `event_type` whose code is in
/// `code_set`, occurring within `horizon_days` after the index date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub event_type: EventType,
    pub code_set: BTreeSet<String>,
    pub horizon_days: u32,
}

impl TargetSpec {
    pub fn matches(&self, event: &ClaimEvent) -> bool {
        event.event_type == self.event_type && self.code_set.contains(&event.code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortRow {
    pub patient_id: String,
    pub index_date: NaiveDate,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub cohort_id: String,
    pub target_spec: TargetSpec,
    pub rows: Vec<CohortRow>,
    pub data_digest: Digest,
}

#[derive(Serialize)]
struct CohortContent<'a> {
    target_spec: &'a TargetSpec,
    rows: &'a [CohortRow],
}

impl Cohort {
    /// Builds a cohort, deriving `data_digest` from the target and rows and
    /// the id from the digest.
    pub fn from_rows(target_spec: TargetSpec, rows: Vec<CohortRow>) -> Result<Self, EncodingError> {
        let data_digest = Self::content_digest(&target_spec, &rows)?;
        Ok(Cohort {
            cohort_id: format!("c-{}", data_digest.short()),
            target_spec,
            rows,
            data_digest,
        })
    }

    pub fn content_digest(target_spec: &TargetSpec, rows: &[CohortRow]) -> Result<Digest, EncodingError> {
        canonical_digest(&CohortContent { target_spec, rows })
    }

    /// True when `data_digest` matches a recomputation over the content.
    pub fn verify(&self) -> bool {
        Self::content_digest(&self.target_spec, &self.rows)
            .map(|d| d == self.data_digest)
            .unwrap_or(false)
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label == 1).count()
    }
}

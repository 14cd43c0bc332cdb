use serde::{Deserialize, Serialize};

use super::types::PatientTimeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnsortedEvents,
    PatientIdMismatch,
    EventBeforeBirth,
    EmptyCode,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::UnsortedEvents => "unsorted_events",
            ViolationKind::PatientIdMismatch => "patient_id_mismatch",
            ViolationKind::EventBeforeBirth => "event_before_birth",
            ViolationKind::EmptyCode => "empty_code",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub event_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineReport {
    pub violations: Vec<Violation>,
}

impl TimelineReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

pub fn validate_timeline(t: &PatientTimeline) -> TimelineReport {
    let mut violations = Vec::new();
    for (i, e) in t.events.iter().enumerate() {
        if e.patient_id != t.patient_id {
            violations.push(Violation { kind: ViolationKind::PatientIdMismatch, event_index: i });
        }
        if e.event_date < t.birth_date {
            violations.push(Violation { kind: ViolationKind::EventBeforeBirth, event_index: i });
        }
        if e.code.is_empty() {
            violations.push(Violation { kind: ViolationKind::EmptyCode, event_index: i });
        }
        if i > 0 && t.events[i - 1].event_date > e.event_date {
            violations.push(Violation { kind: ViolationKind::UnsortedEvents, event_index: i });
        }
    }
    TimelineReport { violations }
}

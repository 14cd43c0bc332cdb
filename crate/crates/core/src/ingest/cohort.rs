use std::collections::{BTreeSet, HashSet};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{validate_timeline, Cohort, CohortRow, EventType, PatientTimeline, TargetSpec};

/// How a patient's index date is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum IndexRule {
    /// Date of the patient's first event of `event_type` with a code in `code_set`.
    FirstEventOf { event_type: EventType, code_set: BTreeSet<String> },
    /// The same date for every patient born on or before it.
    FixedDate { date: NaiveDate },
}

impl IndexRule {
    pub fn index_date(&self, t: &PatientTimeline) -> Option<NaiveDate> {
        match self {
            IndexRule::FirstEventOf { event_type, code_set } => t
                .events
                .iter()
                .find(|e| e.event_type == *event_type && code_set.contains(&e.code))
                .map(|e| e.event_date),
            IndexRule::FixedDate { date } => (t.birth_date <= *date).then_some(*date),
        }
    }
}

/// 1 iff a target event falls in `(index, index + horizon]`.
pub fn label_for(t: &PatientTimeline, target: &TargetSpec, index_date: NaiveDate) -> u8 {
    let end = index_date + Duration::days(i64::from(target.horizon_days));
    let start = t.events.partition_point(|e| e.event_date <= index_date);
    t.events[start..]
        .iter()
        .take_while(|e| e.event_date <= end)
        .any(|e| target.matches(e)) as u8
}

fn check_target(target: &TargetSpec) -> Result<(), IngestError> {
    if target.horizon_days == 0 {
        return Err(IngestError::Config("horizon_days must be at least 1".into()));
    }
    if target.code_set.is_empty() {
        return Err(IngestError::Config("target code_set is empty".into()));
    }
    Ok(())
}

/// Builds one row per patient with an index date, ordered by patient id.
pub fn build_cohort(
    timelines: &[PatientTimeline],
    target: &TargetSpec,
    index_rule: &IndexRule,
) -> Result<Cohort, IngestError> {
    check_target(target)?;
    let mut seen = HashSet::with_capacity(timelines.len());
    let mut rows = Vec::with_capacity(timelines.len());
    for t in timelines {
        if !seen.insert(t.patient_id.as_str()) {
            return Err(IngestError::DuplicatePatient(t.patient_id.clone()));
        }
        let report = validate_timeline(t);
        if let Some(v) = report.violations.first() {
            return Err(IngestError::InvalidTimeline {
                patient_id: t.patient_id.clone(),
                violation: v.kind.as_str().to_string(),
            });
        }
        if let Some(index_date) = index_rule.index_date(t) {
            rows.push(CohortRow {
                patient_id: t.patient_id.clone(),
                index_date,
                label: label_for(t, target, index_date),
            });
        }
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyCohort);
    }
    rows.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(Cohort::from_rows(target.clone(), rows)?)
}

/// Patient-level split. Rows keep their original order inside each part.
pub fn split_cohort(c: &Cohort, fractions: (f64, f64), seed: u64) -> Result<(Cohort, Cohort), IngestError> {
    let (train, test) = fractions;
    if !(train > 0.0 && test > 0.0) || ((train + test) - 1.0).abs() > 1e-9 {
        return Err(IngestError::Config(format!(
            "split fractions ({train}, {test}) must be positive and sum to 1"
        )));
    }
    let mut patients: Vec<&str> = c.rows.iter().map(|r| r.patient_id.as_str()).collect();
    patients.sort_unstable();
    patients.dedup();
    patients.shuffle(&mut crate::rng::seeded(seed, crate::rng::Stream::CohortSplit));
    let n_train = ((patients.len() as f64) * train).round() as usize;
    let train_set: HashSet<&str> = patients[..n_train.min(patients.len())].iter().copied().collect();

    let (a, b): (Vec<CohortRow>, Vec<CohortRow>) = c
        .rows
        .iter()
        .cloned()
        .partition(|r| train_set.contains(r.patient_id.as_str()));
    Ok((
        Cohort::from_rows(c.target_spec.clone(), a)?,
        Cohort::from_rows(c.target_spec.clone(), b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ClaimEvent, Sex};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn timeline(pid: &str, events: &[(&str, EventType, &str)]) -> PatientTimeline {
        PatientTimeline::new(
            pid,
            d("1960-01-01"),
            Sex::F,
            events
                .iter()
                .map(|(date, t, code)| ClaimEvent {
                    patient_id: pid.into(),
                    event_date: d(date),
                    event_type: *t,
                    code: code.to_string(),
                    value: None,
                    source: "t".into(),
                })
                .collect(),
        )
    }

    fn target() -> TargetSpec {
        TargetSpec {
            event_type: EventType::Admission,
            code_set: ["ADM-UNPLANNED".into()].into(),
            horizon_days: 90,
        }
    }

    fn fixed(date: &str) -> IndexRule {
        IndexRule::FixedDate { date: d(date) }
    }

    // index 2021-01-01; +30 = 2021-01-31, +90 = 2021-04-01, +120 = 2021-05-01
    #[test]
    fn window_boundaries() {
        let cases = [("2021-01-31", 1), ("2021-04-01", 1), ("2021-05-01", 0), ("2021-01-01", 0)];
        for (date, want) in cases {
            let t = timeline("p", &[(date, EventType::Admission, "ADM-UNPLANNED")]);
            let c = build_cohort(&[t], &target(), &fixed("2021-01-01")).unwrap();
            assert_eq!(c.rows[0].label, want, "event at {date}");
        }
    }

    #[test]
    fn wrong_code_or_type_does_not_label() {
        let t = timeline(
            "p",
            &[("2021-02-01", EventType::Admission, "ADM-000"), ("2021-02-01", EventType::Diagnosis, "ADM-UNPLANNED")],
        );
        let c = build_cohort(&[t], &target(), &fixed("2021-01-01")).unwrap();
        assert_eq!(c.rows[0].label, 0);
    }

    #[test]
    fn first_event_rule_skips_patients_without_index() {
        let rule = IndexRule::FirstEventOf {
            event_type: EventType::Diagnosis,
            code_set: ["DX-RISK".into()].into(),
        };
        let a = timeline(
            "a",
            &[
                ("2020-01-01", EventType::Diagnosis, "DX-RISK"),
                ("2020-02-01", EventType::Admission, "ADM-UNPLANNED"),
            ],
        );
        let b = timeline("b", &[("2020-01-01", EventType::Diagnosis, "DX-001")]);
        let c = build_cohort(&[b.clone(), a], &target(), &rule).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].index_date, d("2020-01-01"));
        assert_eq!(c.rows[0].label, 1);
        assert!(matches!(build_cohort(&[b], &target(), &rule), Err(IngestError::EmptyCohort)));
    }

    #[test]
    fn rejects_duplicates_and_invalid_timelines() {
        let a = timeline("a", &[]);
        assert!(matches!(
            build_cohort(&[a.clone(), a.clone()], &target(), &fixed("2021-01-01")),
            Err(IngestError::DuplicatePatient(_))
        ));
        let mut bad = a;
        bad.events.push(ClaimEvent {
            patient_id: "zzz".into(),
            event_date: d("2020-01-01"),
            event_type: EventType::Diagnosis,
            code: "DX".into(),
            value: None,
            source: "t".into(),
        });
        assert!(matches!(
            build_cohort(&[bad], &target(), &fixed("2021-01-01")),
            Err(IngestError::InvalidTimeline { .. })
        ));
    }

    fn hundred() -> Cohort {
        let rows = (0..100)
            .map(|i| CohortRow { patient_id: format!("p{i:03}"), index_date: d("2021-01-01"), label: (i % 3 == 0) as u8 })
            .collect();
        Cohort::from_rows(target(), rows).unwrap()
    }

    #[test]
    fn split_sizes_disjoint_union() {
        let c = hundred();
        let (tr, te) = split_cohort(&c, (0.8, 0.2), 7).unwrap();
        assert_eq!((tr.rows.len(), te.rows.len()), (80, 20));
        let a: HashSet<_> = tr.rows.iter().map(|r| r.patient_id.clone()).collect();
        let b: HashSet<_> = te.rows.iter().map(|r| r.patient_id.clone()).collect();
        assert!(a.is_disjoint(&b));
        let mut union: Vec<_> = tr.rows.iter().chain(&te.rows).cloned().collect();
        union.sort_by(|x, y| x.patient_id.cmp(&y.patient_id));
        assert_eq!(union, c.rows);
        assert!(tr.verify() && te.verify());
        assert_ne!(tr.data_digest, te.data_digest);
    }

    #[test]
    fn split_is_deterministic() {
        let c = hundred();
        assert_eq!(split_cohort(&c, (0.8, 0.2), 7).unwrap(), split_cohort(&c, (0.8, 0.2), 7).unwrap());
        assert_ne!(split_cohort(&c, (0.8, 0.2), 7).unwrap().0, split_cohort(&c, (0.8, 0.2), 8).unwrap().0);
    }

    #[test]
    fn split_fraction_violation() {
        assert!(matches!(split_cohort(&hundred(), (0.5, 0.6), 1), Err(IngestError::Config(_))));
        assert!(split_cohort(&hundred(), (1.0, 0.0), 1).is_err());
    }
}

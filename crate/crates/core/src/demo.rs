//! The reference prediction task used by the CLI defaults, the examples and
//! the acceptance suite: unplanned admission within 90 days of 2021-01-01.

use chrono::NaiveDate;
use rand::seq::IndexedRandom;

use crate::domain::{Cohort, EventType, TargetSpec};
use crate::features::{standard_features, FeatureDefinition};
use crate::inference::PredictionRequest;
use crate::ingest::{
    build_cohort, generate_synthetic, label_for, GeneratorConfig, IndexRule, TimelineStore, UNPLANNED_ADMISSION_CODE,
};
use crate::Platform;
use crate::training::TrainConfig;

pub const TASK_ID: &str = "unplanned_admission_90d";
pub const HORIZON_DAYS: u32 = 90;

pub fn index_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date")
}

pub fn target() -> TargetSpec {
    TargetSpec {
        event_type: EventType::Admission,
        code_set: [UNPLANNED_ADMISSION_CODE.to_string()].into(),
        horizon_days: HORIZON_DAYS,
    }
}

pub fn index_rule() -> IndexRule {
    IndexRule::FixedDate { date: index_date() }
}

/// Every non-composite standard feature plus the two composites, in
/// catalog order.
pub fn feature_names() -> Vec<String> {
    standard_features().into_iter().map(|d: FeatureDefinition| d.name).collect()
}

/// An in-memory platform over `n_patients` synthetic patients with the
/// standard catalog registered and the reference cohort added.
pub fn synthetic_platform(n_patients: usize, seed: u64) -> crate::Result<(Platform, Cohort)> {
    let timelines = generate_synthetic(&GeneratorConfig { n_patients, seed, ..Default::default() })?;
    let cohort = build_cohort(&timelines, &target(), &index_rule())?;
    let platform = Platform::in_memory(timelines);
    for def in standard_features() {
        platform.features.register_feature(def)?;
    }
    platform.add_cohort(&cohort)?;
    Ok((platform, cohort))
}

pub fn train_config(cohort_id: &str) -> TrainConfig {
    let names = feature_names();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    TrainConfig::new(TASK_ID, cohort_id, &refs)
}

/// One simulated request and the outcome later reported as feedback.
#[derive(Debug, Clone)]
pub struct SimulatedCase {
    pub request: PredictionRequest,
    pub outcome: u8,
}

/// `n` requests for patients drawn with replacement, each as of the index
/// date, paired with the patient's true label under [`target`].
pub fn traffic_plan(timelines: &TimelineStore, n: usize, seed: u64) -> Vec<SimulatedCase> {
    let date = index_date();
    let eligible: Vec<String> = timelines
        .patient_ids()
        .into_iter()
        .filter(|id| timelines.get(id).is_some_and(|t| t.birth_date <= date))
        .collect();
    let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Traffic);
    let target = target();
    (0..n)
        .filter_map(|_| eligible.choose(&mut rng))
        .map(|id| {
            let t = timelines.get(id).expect("listed patient");
            SimulatedCase { request: PredictionRequest::new(TASK_ID, id, date), outcome: label_for(&t, &target, date) }
        })
        .collect()
}

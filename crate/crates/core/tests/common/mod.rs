#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{NaiveDate, Utc};
use lm_core::demo;
use lm_core::domain::digest;
use lm_core::features::{standard_features, FeatureRef, FeatureScalar, Origin, VectorEntry, VectorPolicy};
use lm_core::inference::{LoggedRequest, PredictionRecord};
use lm_core::ingest::{build_cohort, generate_synthetic, GeneratorConfig};
use lm_core::registry::{ModelArtifact, ModelRegistry, ModelSpecDraft, ProvenanceRecord, Stage};
use lm_core::training::PipelineOutput;
use lm_core::Platform;

/// Synthetic platform with the standard catalog, the demo cohort and one
/// trained model promoted to Production.
pub fn trained_platform(n_patients: usize) -> (Platform, PipelineOutput) {
    let tls = generate_synthetic(&GeneratorConfig { n_patients, ..Default::default() }).unwrap();
    let cohort = build_cohort(&tls, &demo::target(), &demo::index_rule()).unwrap();
    let p = Platform::in_memory(tls);
    for d in standard_features() {
        p.features.register_feature(d).unwrap();
    }
    p.add_cohort(&cohort).unwrap();
    let out = p.train(&demo::train_config(&cohort.cohort_id)).unwrap();
    p.registry.transition_stage(&out.spec.model_id, out.spec.version, Stage::Staging, "test").unwrap();
    p.registry.transition_stage(&out.spec.model_id, out.spec.version, Stage::Production, "test").unwrap();
    (p, out)
}

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// Registers a linear model directly; returns its version.
pub fn register_linear(
    reg: &ModelRegistry,
    task: &str,
    model: &str,
    refs: &[FeatureRef],
    intercept: f64,
    coefficients: Vec<f64>,
    metrics: BTreeMap<String, f64>,
) -> u32 {
    let prov = ProvenanceRecord::new(
        digest(model.as_bytes()),
        digest(task.as_bytes()),
        vec![],
        "logreg_sgd",
        BTreeMap::new(),
        metrics.clone(),
        "test",
        Utc::now(),
    )
    .unwrap();
    let art = ModelArtifact::linear(intercept, coefficients, None).unwrap();
    let draft = ModelSpecDraft {
        task_id: task.into(),
        model_id: model.into(),
        serving_handle: String::new(),
        feature_refs: refs.to_vec(),
        metadata_generator_ids: vec![],
        provenance_ref: prov.record_digest.clone(),
        metrics,
        thresholds: BTreeMap::new(),
    };
    reg.register_model(draft, &art, &prov).unwrap().version
}

pub fn promote(reg: &ModelRegistry, model: &str, version: u32) {
    reg.transition_stage(model, version, Stage::Staging, "test").unwrap();
    reg.transition_stage(model, version, Stage::Production, "test").unwrap();
}

/// A logged prediction carrying `values` for `refs`.
pub fn record(model: &str, version: u32, refs: &[FeatureRef], values: &[f64], probability: f64) -> PredictionRecord {
    PredictionRecord {
        request_id: uuid::Uuid::new_v4().to_string(),
        request: LoggedRequest {
            task_id: "t".into(),
            patient_id: "P".into(),
            as_of_date: date("2021-01-01"),
            feature_policy: VectorPolicy::PrecomputedOnly,
        },
        model_id: model.into(),
        model_version: version,
        vector_digest: digest(b""),
        entries: refs
            .iter()
            .zip(values)
            .map(|(r, v)| VectorEntry { feature_name: r.name.clone(), feature_version: r.version, value: FeatureScalar::Numeric(*v) })
            .collect(),
        raw_score: 0.0,
        probability,
        decision: u8::from(probability > 0.5),
        metadata: BTreeMap::new(),
        origin_flags: vec![Origin::Stored; refs.len()],
        served_at: Utc::now(),
        latency_ms: 0.0,
    }
}

//! Versioned feature definitions, dependency-ordered materialization,
//! as-of vectors and staleness.
//!
//!     cargo run --example feature_repository

use chrono::{Duration, NaiveDate};
use lm_core::domain::{ClaimEvent, EventType};
use lm_core::features::{
    standard_features, FeatureDefinition, FeatureRepository, GeneratorRegistry, VectorPolicy,
};
use lm_core::ingest::{generate_synthetic, GeneratorConfig};

fn main() -> lm_core::Result<()> {
    let repo = FeatureRepository::in_memory(GeneratorRegistry::builtin());
    for def in standard_features() {
        repo.register_feature(def)?;
    }
    // A composite on top of two standard features.
    let composite = |w: f64| {
        FeatureDefinition::new("risk_x_age", "weighted_sum")
            .param("weights", vec![w, 0.01])
            .depends_on(&["dx_risk_ever", "age_at_index"])
    };
    let v1 = repo.register_feature(composite(1.0))?;
    let same = repo.register_feature(composite(1.0))?;
    let v2 = repo.register_feature(composite(2.0))?;
    println!("registered {} (created {}), again {} (created {}), changed params -> {}", v1.feature, v1.created, same.feature, same.created, v2.feature);
    println!("catalog holds {} definitions; {} match \"count\"", repo.catalog_len(), repo.search_catalog("count").len());

    let mut timelines = generate_synthetic(&GeneratorConfig { n_patients: 200, seed: 5, ..Default::default() })?;
    let names: Vec<String> = ["dx_risk_ever", "age_at_index", "dx_count_365d", "risk_x_age"].map(String::from).into();
    let refs = repo.latest_refs(&names)?;
    for (i, stage) in repo.plan(&refs)?.iter().enumerate() {
        let stage: Vec<String> = stage.iter().map(ToString::to_string).collect();
        println!("stage {i}: {}", stage.join(", "));
    }

    let as_of: NaiveDate = "2021-01-01".parse().unwrap();
    let report = repo.materialize(&timelines, &names, &[as_of])?;
    println!("materialized: written {} skipped {} failed {}", report.written, report.skipped, report.failures.len());
    let again = repo.materialize(&timelines, &names, &[as_of])?;
    println!("second pass: written {} skipped {}", again.written, again.skipped);

    let patient = &timelines[0];
    let (vector, origins) = repo.get_vector_asof(None, &patient.patient_id, &refs, as_of, VectorPolicy::PrecomputedOnly)?;
    println!("{} as of {as_of}: {:?} from {:?}", patient.patient_id, vector.numeric_values()?, origins);

    // Events after the as-of date cannot change the vector.
    let pid = patient.patient_id.clone();
    timelines[0].events.push(ClaimEvent {
        patient_id: pid.clone(),
        event_date: as_of + Duration::days(10),
        event_type: EventType::Diagnosis,
        code: "DX-RISK".into(),
        value: None,
        source: "late".into(),
    });
    let (recomputed, _) = repo.get_vector_asof(Some(&timelines[0]), &pid, &refs, as_of, VectorPolicy::ComputeOnMiss)?;
    println!("digest unchanged after a future event: {}", recomputed.vector_digest == vector.vector_digest);

    let stale = repo.mark_stale("age_at_index")?;
    println!("marked stale: {stale:?}");
    let miss = repo.get_vector_asof(None, &pid, &refs, as_of, VectorPolicy::PrecomputedOnly);
    println!("precomputed-only read after staleness: {}", miss.err().map(|e| e.to_string()).unwrap_or_default());
    let r = repo.materialize(&timelines, &names, &[as_of])?;
    println!("refresh rewrote {} values", r.written);
    Ok(())
}

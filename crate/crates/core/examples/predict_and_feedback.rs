//! Serve predictions for the Production model, compare precomputed and
//! on-demand feature paths, and record clinician feedback.
//!
//!     cargo run --release --example predict_and_feedback

use std::time::Instant;

use lm_core::demo;
use lm_core::features::VectorPolicy;
use lm_core::inference::{FeedbackRecord, PredictionRequest};
use lm_core::registry::Stage;

fn main() -> lm_core::Result<()> {
    let (platform, cohort) = demo::synthetic_platform(1000, 21)?;
    let out = platform.train(&demo::train_config(&cohort.cohort_id))?;
    platform.registry.transition_stage(&out.spec.model_id, out.spec.version, Stage::Staging, "demo")?;
    platform.registry.transition_stage(&out.spec.model_id, out.spec.version, Stage::Production, "demo")?;

    let service = platform.inference(Some("s3cret".into()));
    let date = demo::index_date();
    let req = PredictionRequest::new(demo::TASK_ID, &cohort.rows[0].patient_id, date);
    if let Err(e) = service.predict(&req, None) {
        println!("without a key: {e}");
    }

    let rec = service.predict(&req.clone().with_policy(VectorPolicy::PrecomputedOnly), Some("s3cret"))?;
    println!(
        "{} -> p={:.3} decision={} via {} v{} in {:.3} ms",
        rec.request.patient_id, rec.probability, rec.decision, rec.model_id, rec.model_version, rec.latency_ms
    );
    println!("top contributions: {}", rec.metadata["feature_importance_topk"]);
    println!("provenance summary: {}", rec.metadata["provenance_summary"]);

    // A date nothing was materialized for.
    let later = date + chrono::Duration::days(45);
    let cold = PredictionRequest::new(demo::TASK_ID, &cohort.rows[0].patient_id, later);
    match service.predict(&cold.clone().with_policy(VectorPolicy::PrecomputedOnly), Some("s3cret")) {
        Err(e) => println!("precomputed-only at {later}: {e}"),
        Ok(_) => unreachable!("nothing is stored for {later}"),
    }
    let computed = service.predict(&cold, Some("s3cret"))?;
    println!("compute-on-miss at {later}: p={:.3}, origins {:?}", computed.probability, &computed.origin_flags[..3]);

    let time = |policy: VectorPolicy, when| {
        let t = Instant::now();
        for row in cohort.rows.iter().take(200) {
            let r = PredictionRequest::new(demo::TASK_ID, &row.patient_id, when).with_policy(policy);
            service.predict(&r, Some("s3cret")).expect("served");
        }
        t.elapsed().as_secs_f64() * 1000.0 / 200.0
    };
    println!("mean latency: precomputed {:.3} ms, computed {:.3} ms", time(VectorPolicy::PrecomputedOnly, date), time(VectorPolicy::ComputeOnMiss, later + chrono::Duration::days(1)));

    let first = service.submit_feedback(FeedbackRecord::new(&rec.request_id, 0, "triaged"), Some("s3cret"))?;
    let repeat = service.submit_feedback(FeedbackRecord::new(&rec.request_id, 0, "triaged"), Some("s3cret"))?;
    let revised = service.submit_feedback(FeedbackRecord::new(&rec.request_id, 1, "admitted"), Some("s3cret"))?;
    println!(
        "feedback versions: {} (created {}), repeat {} (created {}), revision {}",
        first.feedback_version, first.created, repeat.feedback_version, repeat.created, revised.feedback_version
    );
    println!("logged predictions: {}", platform.predictions.len());
    Ok(())
}

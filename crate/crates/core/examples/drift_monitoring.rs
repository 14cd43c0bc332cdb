//! Monitor a deployed model: a calm period raises nothing, then a surge of
//! recent diagnoses shifts utilization features and outcomes stop matching
//! predictions.
//!
//!     cargo run --release --example drift_monitoring

use chrono::Duration;
use lm_core::demo;
use lm_core::domain::{ClaimEvent, EventType};
use lm_core::features::VectorPolicy;
use lm_core::inference::{FeedbackRecord, PredictionRequest};
use lm_core::monitoring::{MonitorConfig, MonitorRun};
use lm_core::registry::Stage;

fn report(label: &str, run: &MonitorRun) {
    println!("{label}: {} new alerts, {} resolved", run.new_alerts.len(), run.resolved.len());
    for m in &run.models {
        if let Ok(findings) = &m.drift {
            let worst = findings.iter().max_by(|a, b| a.psi.total_cmp(&b.psi));
            if let Some(f) = worst {
                println!("  largest psi {:.3} on {}", f.psi, f.target);
            }
        }
        println!("  accuracy {:?}", m.accuracy);
    }
    for a in &run.new_alerts {
        println!("  {:?} {:?} {} = {:.3} (threshold {:.3})", a.severity, a.kind, a.metric_name, a.value, a.threshold);
    }
}

fn main() -> lm_core::Result<()> {
    let (platform, cohort) = demo::synthetic_platform(1500, 13)?;
    let out = platform.train(&demo::train_config(&cohort.cohort_id))?;
    let reg = &platform.registry;
    reg.transition_stage(&out.spec.model_id, out.spec.version, Stage::Staging, "demo")?;
    reg.transition_stage(&out.spec.model_id, out.spec.version, Stage::Production, "demo")?;

    let service = platform.inference(None);
    let monitor = platform.monitor(MonitorConfig::default());

    // Calm period: cohort patients at their index date, true outcomes.
    for row in cohort.rows.iter().take(600) {
        let rec = service.predict(&PredictionRequest::new(demo::TASK_ID, &row.patient_id, row.index_date), None)?;
        service.submit_feedback(FeedbackRecord::new(&rec.request_id, row.label, "reviewed"), None)?;
    }
    report("calm", &monitor.evaluate_and_notify()?);

    // Every patient suddenly accumulates recent diagnoses.
    let later = demo::index_date() + Duration::days(60);
    for row in cohort.rows.iter().take(600) {
        for k in 0..12 {
            platform.timelines.append_event(ClaimEvent {
                patient_id: row.patient_id.clone(),
                event_date: later - Duration::days(5 + k),
                event_type: EventType::Diagnosis,
                code: "DX-030".into(),
                value: None,
                source: "surge".into(),
            });
        }
    }
    for row in cohort.rows.iter().take(600) {
        let req = PredictionRequest::new(demo::TASK_ID, &row.patient_id, later).with_policy(VectorPolicy::ComputeOnMiss);
        let rec = service.predict(&req, None)?;
        // Outcomes now run against the model.
        service.submit_feedback(FeedbackRecord::new(&rec.request_id, 1 - rec.decision, "reviewed"), None)?;
    }
    report("after surge", &monitor.evaluate_and_notify()?);
    report("repeat run", &monitor.evaluate_and_notify()?);
    println!("open alerts: {}", platform.alerts.open_alerts().len());
    Ok(())
}

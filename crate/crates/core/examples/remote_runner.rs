//! Serve a registered model from a separate HTTP runner and call it through
//! an `http://` serving handle.
//!
//!     cargo run --release --example remote_runner

use lm_core::demo;
use lm_core::http::runner_router;
use lm_core::inference::PredictionRequest;
use lm_core::registry::{ModelSpecDraft, Stage};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (platform, cohort) = tokio::task::spawn_blocking(|| demo::synthetic_platform(600, 4)).await??;
    let platform = std::sync::Arc::new(platform);
    let p = platform.clone();
    let cohort_id = cohort.cohort_id.clone();
    let local = tokio::task::spawn_blocking(move || p.train(&demo::train_config(&cohort_id))).await??;

    // The runner holds a copy of the artifact and the ordered feature list.
    let artifact = platform.registry.artifact(&local.spec.artifact_digest)?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let url = format!("http://{}", listener.local_addr()?);
    let app = runner_router(artifact.clone(), local.spec.feature_refs.clone());
    tokio::spawn(async move { axum::serve(listener, app).await });
    println!("runner listening at {url}");

    let p = platform.clone();
    let spec = local.spec.clone();
    let url2 = url.clone();
    let remote = tokio::task::spawn_blocking(move || -> lm_core::Result<_> {
        let draft = ModelSpecDraft {
            task_id: "admission_remote".into(),
            model_id: "admission-remote".into(),
            serving_handle: url2,
            feature_refs: spec.feature_refs.clone(),
            metadata_generator_ids: vec![],
            provenance_ref: spec.provenance_ref.clone(),
            metrics: spec.metrics.clone(),
            thresholds: spec.thresholds.clone(),
        };
        let prov = p.registry.provenance(&spec.provenance_ref)?;
        let v = p.registry.register_model(draft, &artifact, &prov)?.version;
        p.registry.transition_stage("admission-remote", v, Stage::Staging, "demo")?;
        p.registry.transition_stage("admission-remote", v, Stage::Production, "demo")?;
        p.registry.transition_stage(&spec.model_id, spec.version, Stage::Staging, "demo")?;
        p.registry.transition_stage(&spec.model_id, spec.version, Stage::Production, "demo")?;

        let svc = p.inference(None);
        let mut agree = 0;
        for row in cohort.rows.iter().take(50) {
            let a = svc.predict(&PredictionRequest::new(demo::TASK_ID, &row.patient_id, row.index_date), None)?;
            let b = svc.predict(&PredictionRequest::new("admission_remote", &row.patient_id, row.index_date), None)?;
            agree += usize::from(a.probability == b.probability);
        }
        Ok(agree)
    })
    .await??;
    println!("in-process and remote scores agree on {remote}/50 patients");

    let resp = reqwest::Client::new()
        .post(format!("{url}/score"))
        .json(&serde_json::json!({ "entries": [["age_at_index", 1, 70.0]] }))
        .send()
        .await?;
    println!("short vector -> {} {}", resp.status(), resp.text().await?);
    Ok(())
}

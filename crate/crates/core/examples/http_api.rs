//! Run the HTTP service in-process and drive it like an external client.
//!
//!     cargo run --release --example http_api

use std::sync::Arc;
use std::time::Duration;

use lm_core::demo;
use lm_core::http::{serve, AppState, API_KEY_HEADER};
use lm_core::monitoring::MonitorConfig;
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (platform, cohort) = tokio::task::spawn_blocking(|| demo::synthetic_platform(800, 2)).await??;
    let platform = Arc::new(platform);
    let p = platform.clone();
    let cid = cohort.cohort_id.clone();
    let out = tokio::task::spawn_blocking(move || p.train(&demo::train_config(&cid))).await??;

    let state = AppState::new(platform, Some("key".into()), MonitorConfig { interval_secs: 0, ..Default::default() });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, state, Duration::from_secs(1), async {
        stopped.await.ok();
    }));
    let c = reqwest::Client::new();
    println!("health: {}", c.get(format!("{base}/v1/health")).send().await?.text().await?);

    let stage = format!("{base}/v1/models/{}/versions/{}/stage", out.spec.model_id, out.spec.version);
    for to in ["Production", "Staging", "Production"] {
        let r = c.post(&stage).header(API_KEY_HEADER, "key").json(&json!({ "to": to, "actor": "ops" })).send().await?;
        println!("promote to {to}: {}", r.status());
    }
    let models: Vec<Value> = c.get(format!("{base}/v1/models?task_id={}", demo::TASK_ID)).send().await?.json().await?;
    println!("models: {}", models.iter().map(|m| format!("{} v{} {}", m["model_id"], m["version"], m["stage"])).collect::<Vec<_>>().join(", "));

    let body = json!({ "task_id": demo::TASK_ID, "patient_id": cohort.rows[3].patient_id, "as_of_date": "2021-01-01" });
    let denied = c.post(format!("{base}/v1/predict")).json(&body).send().await?;
    println!("predict without key: {}", denied.status());
    let pred: Value = c.post(format!("{base}/v1/predict")).header(API_KEY_HEADER, "key").json(&body).send().await?.json().await?;
    println!("prediction {} p={}", pred["request_id"], pred["probability"]);

    let fb = json!({ "request_id": pred["request_id"], "observed_outcome": cohort.rows[3].label, "workflow_state": "closed" });
    let receipt: Value = c.post(format!("{base}/v1/feedback")).header(API_KEY_HEADER, "key").json(&fb).send().await?.json().await?;
    println!("feedback receipt {receipt}");

    let lineage: Value = c.get(format!("{base}/v1/provenance/{}", out.spec.provenance_ref)).send().await?.json().await?;
    println!("lineage: {} cohorts, {} features", lineage["cohorts"].as_array().map_or(0, Vec::len), lineage["features"].as_array().map_or(0, Vec::len));
    let run: Value = c.post(format!("{base}/v1/monitor/run")).header(API_KEY_HEADER, "key").send().await?.json().await?;
    println!("monitor run: {} new alerts", run["new_alerts"].as_array().map_or(0, Vec::len));
    let audit: Vec<Value> = c.get(format!("{base}/v1/audit")).send().await?.json().await?;
    println!("audit entries: {}", audit.len());

    stop.send(()).ok();
    server.await??;
    Ok(())
}

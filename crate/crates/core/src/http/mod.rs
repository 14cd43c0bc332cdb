//! HTTP API over the inference service, registry and monitor.

mod api;
mod runner;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;

pub use api::{router, ApiError, AppState, API_KEY_HEADER};
pub use runner::runner_router;

use crate::monitoring::MonitorConfig;
use crate::Platform;

impl AppState {
    pub fn new(platform: Arc<Platform>, api_key: Option<String>, monitor: MonitorConfig) -> Self {
        let api_key = api_key.filter(|k| !k.is_empty());
        AppState {
            service: Arc::new(platform.inference(api_key.clone())),
            monitor: Arc::new(platform.monitor(monitor)),
            platform,
            api_key,
        }
    }
}

/// Serves the API on `listener` until `shutdown` resolves. Runs the monitor
/// every `interval_secs` (0 disables) and refreshes registry state from disk
/// every `refresh`.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    refresh: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let interval = state.monitor.config().interval_secs;
    let mut tasks = Vec::new();
    if interval > 0 {
        let monitor = state.monitor.clone();
        tasks.push(tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(interval));
            tick.tick().await;
            loop {
                tick.tick().await;
                let m = monitor.clone();
                match tokio::task::spawn_blocking(move || m.evaluate_and_notify()).await {
                    Ok(Ok(run)) if !run.new_alerts.is_empty() => {
                        tracing::warn!(new_alerts = run.new_alerts.len(), "monitor raised alerts")
                    }
                    Ok(Err(e)) => tracing::error!(error = %e, "monitor run failed"),
                    _ => {}
                }
            }
        }));
    }
    if !refresh.is_zero() {
        let registry = state.platform.registry.clone();
        tasks.push(tokio::spawn(async move {
            let mut tick = tokio::time::interval(refresh);
            loop {
                tick.tick().await;
                let r = registry.clone();
                if let Ok(Err(e)) = tokio::task::spawn_blocking(move || r.refresh()).await {
                    tracing::error!(error = %e, "registry refresh failed");
                }
            }
        }));
    }
    let app = router(state);
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    tasks.iter().for_each(|t| t.abort());
    result
}

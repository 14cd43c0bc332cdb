use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::drift::{detect_drift, retrospective_accuracy, AccuracyOutcome, DriftFinding, MonitorConfig, Severity, SCORE_TARGET};
use super::profile::ProfileStore;
use super::MonitorError;
use crate::domain::canonical_digest;
use crate::inference::{FeedbackLog, PredictionLog};
use crate::jsonl::{self, Appender};
use crate::registry::{ModelRegistry, Stage};

pub const SUGGESTED_ACTION: &str = "review for retraining";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    FeatureDrift,
    PredictionDrift,
    AccuracyDrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub kind: AlertKind,
    pub severity: Severity,
    pub model_id: String,
    pub model_version: u32,
    pub metric_name: String,
    pub value: f64,
    pub threshold: f64,
    pub window: String,
    pub suggested_action: String,
    pub raised_at: DateTime<Utc>,
}

impl Alert {
    fn key(&self) -> AlertKey {
        (self.kind, self.model_id.clone(), self.model_version, self.metric_name.clone())
    }
}

type AlertKey = (AlertKind, String, u32, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AlertEvent {
    Raised(Alert),
    /// The condition behind `alert_id` cleared on a later evaluation.
    Resolved { alert_id: String, at: DateTime<Utc> },
}

#[derive(Debug, Default)]
struct AlertState {
    alerts: Vec<Alert>,
    open: BTreeMap<AlertKey, String>,
    resolved: BTreeMap<String, DateTime<Utc>>,
}

impl AlertState {
    fn apply(&mut self, e: AlertEvent) {
        match e {
            AlertEvent::Raised(a) => {
                self.open.insert(a.key(), a.alert_id.clone());
                self.alerts.push(a);
            }
            AlertEvent::Resolved { alert_id, at } => {
                self.open.retain(|_, id| *id != alert_id);
                self.resolved.insert(alert_id, at);
            }
        }
    }
}

/// Append-only alert log with raise and resolve events.
#[derive(Debug, Default)]
pub struct AlertLog {
    state: RwLock<AlertState>,
    writer: Mutex<Option<Appender>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertView {
    #[serde(flatten)]
    pub alert: Alert,
    pub resolved_at: Option<DateTime<Utc>>,
}

impl AlertLog {
    pub fn in_memory() -> Self {
        AlertLog::default()
    }

    pub fn open(path: &Path) -> Result<Self, MonitorError> {
        let events: Vec<AlertEvent> = jsonl::read_all(path).map_err(|e| MonitorError::Metric(e.to_string()))?;
        let mut state = AlertState::default();
        events.into_iter().for_each(|e| state.apply(e));
        Ok(AlertLog {
            state: RwLock::new(state),
            writer: Mutex::new(Some(Appender::open(path).map_err(|e| MonitorError::Metric(e.to_string()))?)),
        })
    }

    fn append(&self, writer: &mut Option<Appender>, e: AlertEvent) -> Result<(), MonitorError> {
        if let Some(w) = writer.as_mut() {
            w.append(&e).map_err(|e| MonitorError::Metric(e.to_string()))?;
        }
        self.state.write().apply(e);
        Ok(())
    }

    /// Alerts raised strictly after `since` (all when `None`), in raise order.
    pub fn list(&self, since: Option<DateTime<Utc>>) -> Vec<AlertView> {
        let s = self.state.read();
        s.alerts
            .iter()
            .filter(|a| since.is_none_or(|t| a.raised_at > t))
            .map(|a| AlertView { alert: a.clone(), resolved_at: s.resolved.get(&a.alert_id).copied() })
            .collect()
    }

    pub fn open_alerts(&self) -> Vec<Alert> {
        let s = self.state.read();
        s.alerts.iter().filter(|a| s.open.get(&a.key()) == Some(&a.alert_id)).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.state.read().alerts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outcome of one model's evaluation in a monitor run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model_id: String,
    pub model_version: u32,
    pub window: usize,
    pub drift: Result<Vec<DriftFinding>, String>,
    pub accuracy: AccuracyOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorRun {
    pub new_alerts: Vec<Alert>,
    pub resolved: Vec<String>,
    pub models: Vec<ModelEvaluation>,
}

/// The periodic monitoring job.
#[derive(Debug)]
pub struct Monitor {
    registry: Arc<ModelRegistry>,
    predictions: Arc<PredictionLog>,
    feedback: Arc<FeedbackLog>,
    profiles: Arc<ProfileStore>,
    alerts: Arc<AlertLog>,
    config: MonitorConfig,
    run_lock: Mutex<()>,
}

struct Condition {
    kind: AlertKind,
    metric_name: String,
    value: f64,
    threshold: f64,
    window: String,
    firing: bool,
}

impl Monitor {
    pub fn new(
        registry: Arc<ModelRegistry>,
        predictions: Arc<PredictionLog>,
        feedback: Arc<FeedbackLog>,
        profiles: Arc<ProfileStore>,
        alerts: Arc<AlertLog>,
        config: MonitorConfig,
    ) -> Self {
        Monitor { registry, predictions, feedback, profiles, alerts, config, run_lock: Mutex::new(()) }
    }

    pub fn alerts(&self) -> &Arc<AlertLog> {
        &self.alerts
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Evaluates every Production model, raising new critical alerts and
    /// resolving open ones whose condition has cleared. Runs are serialized.
    pub fn evaluate_and_notify(&self) -> Result<MonitorRun, MonitorError> {
        let _guard = self.run_lock.lock();
        self.registry.refresh().map_err(|e| MonitorError::Metric(e.to_string()))?;
        let cfg = &self.config;
        let all = self.predictions.snapshot();
        let feedback = self.feedback.latest_all();
        let mut writer = self.alerts.writer.lock();
        let mut run = MonitorRun { new_alerts: vec![], resolved: vec![], models: vec![] };

        let production: Vec<_> = self.registry.list(None).into_iter().filter(|s| s.stage == Stage::Production).collect();
        for spec in production {
            let mine: Vec<_> = all
                .iter()
                .filter(|r| r.model_id == spec.model_id && r.model_version == spec.version)
                .cloned()
                .collect();
            let window = &mine[mine.len().saturating_sub(cfg.drift_window)..];
            let drift = self
                .profiles
                .get(&spec.model_id, spec.version)
                .and_then(|p| detect_drift(&p, window, cfg))
                .map_err(|e| e.to_string());
            let accuracy = retrospective_accuracy(&mine, &feedback, cfg);

            let mut conditions = Vec::new();
            if let Ok(findings) = &drift {
                for f in findings {
                    conditions.push(Condition {
                        kind: if f.target == SCORE_TARGET { AlertKind::PredictionDrift } else { AlertKind::FeatureDrift },
                        metric_name: format!("psi:{}", f.target),
                        value: f.psi,
                        threshold: cfg.psi_critical,
                        window: format!("last {} predictions", window.len()),
                        firing: f.severity == Some(Severity::Critical),
                    });
                }
            }
            if let (AccuracyOutcome::Computed { auc, n, .. }, Some(reference)) = (&accuracy, spec.metrics.get("auc_test")) {
                let threshold = reference - cfg.auc_margin;
                conditions.push(Condition {
                    kind: AlertKind::AccuracyDrop,
                    metric_name: "auc".into(),
                    value: *auc,
                    threshold,
                    window: format!("last {n} feedback-joined predictions"),
                    firing: *auc < threshold,
                });
            }

            for c in conditions {
                let key = (c.kind, spec.model_id.clone(), spec.version, c.metric_name.clone());
                let open = self.alerts.state.read().open.get(&key).cloned();
                match (c.firing, open) {
                    (true, None) => {
                        let n_before = self.alerts.len();
                        let alert_id = canonical_digest(&(&key, c.value, n_before))
                            .map(|d| format!("a-{}", d.short()))
                            .map_err(|e| MonitorError::Metric(e.to_string()))?;
                        let alert = Alert {
                            alert_id,
                            kind: c.kind,
                            severity: Severity::Critical,
                            model_id: spec.model_id.clone(),
                            model_version: spec.version,
                            metric_name: c.metric_name,
                            value: c.value,
                            threshold: c.threshold,
                            window: c.window,
                            suggested_action: SUGGESTED_ACTION.into(),
                            raised_at: Utc::now(),
                        };
                        tracing::warn!(alert_id = %alert.alert_id, kind = ?alert.kind, metric = %alert.metric_name, value = alert.value, "alert raised");
                        self.alerts.append(&mut writer, AlertEvent::Raised(alert.clone()))?;
                        run.new_alerts.push(alert);
                    }
                    (false, Some(alert_id)) => {
                        self.alerts.append(&mut writer, AlertEvent::Resolved { alert_id: alert_id.clone(), at: Utc::now() })?;
                        run.resolved.push(alert_id);
                    }
                    _ => {}
                }
            }
            run.models.push(ModelEvaluation {
                model_id: spec.model_id.clone(),
                model_version: spec.version,
                window: window.len(),
                drift,
                accuracy,
            });
        }
        Ok(run)
    }
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::profile::ReferenceProfile;
use super::MonitorError;
use crate::inference::{PredictionRecord, StoredFeedback};
use crate::training::auc;

/// Monitor thresholds and window sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub interval_secs: u64,
    /// Most recent predictions per model used for drift.
    pub drift_window: usize,
    pub min_drift_window: usize,
    pub psi_warning: f64,
    pub psi_critical: f64,
    /// Most recent feedback-joined predictions used for accuracy.
    pub accuracy_window: usize,
    pub min_feedback: usize,
    pub auc_margin: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            interval_secs: 60,
            drift_window: 500,
            min_drift_window: 100,
            psi_warning: 0.1,
            psi_critical: 0.2,
            accuracy_window: 500,
            min_feedback: 30,
            auc_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Critical,
}

pub const SCORE_TARGET: &str = "score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFinding {
    /// Feature name, or `score` for the predicted probability.
    pub target: String,
    pub psi: f64,
    pub severity: Option<Severity>,
}

fn severity(psi: f64, cfg: &MonitorConfig) -> Option<Severity> {
    if psi >= cfg.psi_critical {
        Some(Severity::Critical)
    } else if psi >= cfg.psi_warning {
        Some(Severity::Warning)
    } else {
        None
    }
}

/// PSI of every profiled feature and of the score over `window`.
///
/// Records must come from the profiled model version; values are read the
/// way the model reads them (missing as 0). Categorical features are skipped.
pub fn detect_drift(
    profile: &ReferenceProfile,
    window: &[PredictionRecord],
    cfg: &MonitorConfig,
) -> Result<Vec<DriftFinding>, MonitorError> {
    if window.len() < cfg.min_drift_window {
        return Err(MonitorError::Profile(format!(
            "window of {} predictions is below the minimum of {}",
            window.len(),
            cfg.min_drift_window
        )));
    }
    let mut out = Vec::with_capacity(profile.features.len() + 1);
    for (j, fp) in profile.features.iter().enumerate() {
        let mut values = Vec::with_capacity(window.len());
        for r in window {
            let entry = r
                .entries
                .get(j)
                .filter(|e| e.feature_name == fp.feature.name && e.feature_version == fp.feature.version)
                .ok_or_else(|| MonitorError::Profile(format!("record {} does not match the profile", r.request_id)))?;
            match entry.value.model_input() {
                Some(v) => values.push(v),
                None => break,
            }
        }
        if values.len() < window.len() {
            continue;
        }
        let psi = fp.histogram.psi_of(&values)?;
        out.push(DriftFinding { target: fp.feature.name.clone(), psi, severity: severity(psi, cfg) });
    }
    let scores: Vec<f64> = window.iter().map(|r| r.probability).collect();
    let psi = profile.score.psi_of(&scores)?;
    out.push(DriftFinding { target: SCORE_TARGET.into(), psi, severity: severity(psi, cfg) });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AccuracyOutcome {
    Computed { auc: f64, accuracy: f64, n: usize },
    InsufficientData { n: usize, reason: String },
}

/// AUC and accuracy of logged probabilities and decisions against the
/// latest feedback, over the last `cfg.accuracy_window` joined predictions
/// in log order.
pub fn retrospective_accuracy(
    predictions: &[PredictionRecord],
    feedback: &HashMap<String, StoredFeedback>,
    cfg: &MonitorConfig,
) -> AccuracyOutcome {
    let joined: Vec<(&PredictionRecord, u8)> = predictions
        .iter()
        .filter_map(|p| feedback.get(&p.request_id).map(|f| (p, f.record.observed_outcome)))
        .collect();
    let window = &joined[joined.len().saturating_sub(cfg.accuracy_window)..];
    let n = window.len();
    if n < cfg.min_feedback {
        return AccuracyOutcome::InsufficientData { n, reason: format!("need at least {} feedback-joined predictions", cfg.min_feedback) };
    }
    let probs: Vec<f64> = window.iter().map(|(p, _)| p.probability).collect();
    let y: Vec<u8> = window.iter().map(|(_, o)| *o).collect();
    match auc(&probs, &y) {
        Ok(auc) => {
            let hits = window.iter().filter(|(p, o)| p.decision == *o).count();
            AccuracyOutcome::Computed { auc, accuracy: hits as f64 / n as f64, n }
        }
        Err(_) => AccuracyOutcome::InsufficientData { n, reason: "feedback outcomes are all one class".into() },
    }
}

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::psi::{Histogram, DEFAULT_BINS};
use super::MonitorError;
use crate::features::FeatureRef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub feature: FeatureRef,
    pub histogram: Histogram,
    pub mean: f64,
    pub std_dev: f64,
}

/// Training-time distributions of every model input and of the predicted
/// probability, used as the drift baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub model_id: String,
    pub version: u32,
    pub features: Vec<FeatureProfile>,
    pub score: Histogram,
    pub n_samples: usize,
    pub created_at: DateTime<Utc>,
}

impl ReferenceProfile {
    /// `x` rows are aligned to `refs`; `probabilities` aligned to rows.
    pub fn build(
        model_id: &str,
        version: u32,
        refs: &[FeatureRef],
        x: &[Vec<f64>],
        probabilities: &[f64],
    ) -> Result<Self, MonitorError> {
        if x.len() != probabilities.len() || x.iter().any(|r| r.len() != refs.len()) {
            return Err(MonitorError::Metric("profile inputs are misaligned".into()));
        }
        let n = x.len() as f64;
        let features = refs
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let col: Vec<f64> = x.iter().map(|row| row[j]).collect();
                let mean = col.iter().sum::<f64>() / n;
                let std_dev = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                Ok(FeatureProfile { feature: r.clone(), histogram: Histogram::equal_frequency(&col, DEFAULT_BINS)?, mean, std_dev })
            })
            .collect::<Result<_, MonitorError>>()?;
        Ok(ReferenceProfile {
            model_id: model_id.into(),
            version,
            features,
            score: Histogram::equal_frequency(probabilities, DEFAULT_BINS)?,
            n_samples: x.len(),
            created_at: Utc::now(),
        })
    }
}

/// One JSON file per model version under a directory, or memory only.
#[derive(Debug, Default)]
pub struct ProfileStore {
    dir: Option<PathBuf>,
    cache: RwLock<HashMap<(String, u32), ReferenceProfile>>,
}

impl ProfileStore {
    pub fn in_memory() -> Self {
        ProfileStore::default()
    }

    pub fn open(dir: &Path) -> Self {
        ProfileStore { dir: Some(dir.to_path_buf()), cache: RwLock::default() }
    }

    fn path(&self, model_id: &str, version: u32) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{model_id}-v{version}.json")))
    }

    pub fn save(&self, profile: &ReferenceProfile) -> Result<(), MonitorError> {
        if let Some(path) = self.path(&profile.model_id, profile.version) {
            std::fs::create_dir_all(path.parent().expect("profile path has a parent"))?;
            std::fs::write(&path, serde_json::to_vec_pretty(profile).map_err(|e| MonitorError::Metric(e.to_string()))?)?;
        }
        self.cache.write().insert((profile.model_id.clone(), profile.version), profile.clone());
        Ok(())
    }

    pub fn get(&self, model_id: &str, version: u32) -> Result<ReferenceProfile, MonitorError> {
        let key = (model_id.to_string(), version);
        if let Some(p) = self.cache.read().get(&key) {
            return Ok(p.clone());
        }
        let missing = || MonitorError::Profile(format!("no reference profile for {model_id} v{version}"));
        let path = self.path(model_id, version).ok_or_else(missing)?;
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing()),
            Err(e) => return Err(e.into()),
        };
        let profile: ReferenceProfile =
            serde_json::from_slice(&bytes).map_err(|e| MonitorError::Profile(format!("{}: {e}", path.display())))?;
        self.cache.write().insert(key, profile.clone());
        Ok(profile)
    }
}

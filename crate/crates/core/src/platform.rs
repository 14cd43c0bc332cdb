//! All stores and services of one data root, wired together.

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::domain::{Cohort, PatientTimeline};
use crate::error::Result;
use crate::features::{FeatureRepository, GeneratorRegistry};
use crate::inference::{FeedbackLog, InferenceService, PredictionLog};
use crate::ingest::{load_cohort, load_timelines, save_cohort, IngestError, TimelineStore};
use crate::monitoring::{AlertLog, Monitor, MonitorConfig, ProfileStore};
use crate::registry::ModelRegistry;
use crate::training::{run_pipeline, CohortSource, PipelineContext, PipelineOutput, TrainConfig};
use crate::workspace::DataRoot;

#[derive(Debug)]
pub struct Platform {
    root: Option<DataRoot>,
    pub timelines: Arc<TimelineStore>,
    pub features: Arc<FeatureRepository>,
    pub registry: Arc<ModelRegistry>,
    pub profiles: Arc<ProfileStore>,
    pub predictions: Arc<PredictionLog>,
    pub feedback: Arc<FeedbackLog>,
    pub alerts: Arc<AlertLog>,
    cohorts: RwLock<BTreeMap<String, Cohort>>,
}

impl Platform {
    /// Opens every store under `root`, loading timelines into memory.
    pub fn open(root: &DataRoot) -> Result<Self> {
        std::fs::create_dir_all(root.path()).map_err(IngestError::from)?;
        let loaded = load_timelines(root)?;
        if loaded.orphan_events > 0 {
            tracing::warn!(orphans = loaded.orphan_events, "events without a patient record were ignored");
        }
        Ok(Platform {
            timelines: Arc::new(TimelineStore::new(loaded.timelines)),
            features: Arc::new(FeatureRepository::open(root, GeneratorRegistry::builtin())?),
            registry: Arc::new(ModelRegistry::open(&root.registry(), &root.artifacts_dir())?),
            profiles: Arc::new(ProfileStore::open(&root.profiles_dir())),
            predictions: Arc::new(PredictionLog::open(&root.predictions())?),
            feedback: Arc::new(FeedbackLog::open(&root.feedback())?),
            alerts: Arc::new(AlertLog::open(&root.alerts())?),
            cohorts: RwLock::default(),
            root: Some(root.clone()),
        })
    }

    pub fn in_memory(timelines: Vec<PatientTimeline>) -> Self {
        Platform {
            root: None,
            timelines: Arc::new(TimelineStore::new(timelines)),
            features: Arc::new(FeatureRepository::in_memory(GeneratorRegistry::builtin())),
            registry: Arc::new(ModelRegistry::in_memory()),
            profiles: Arc::new(ProfileStore::in_memory()),
            predictions: Arc::new(PredictionLog::in_memory()),
            feedback: Arc::new(FeedbackLog::in_memory()),
            alerts: Arc::new(AlertLog::in_memory()),
            cohorts: RwLock::default(),
        }
    }

    pub fn root(&self) -> Option<&DataRoot> {
        self.root.as_ref()
    }

    /// Keeps a cohort for later training; persisted when the platform has a root.
    pub fn add_cohort(&self, cohort: &Cohort) -> Result<()> {
        if let Some(root) = &self.root {
            save_cohort(root, cohort)?;
        }
        self.cohorts.write().insert(cohort.cohort_id.clone(), cohort.clone());
        Ok(())
    }

    pub fn pipeline_context(&self) -> PipelineContext<'_> {
        PipelineContext {
            cohorts: self,
            timelines: self.timelines.as_ref(),
            features: &self.features,
            registry: &self.registry,
            profiles: &self.profiles,
        }
    }

    pub fn train(&self, cfg: &TrainConfig) -> Result<PipelineOutput> {
        Ok(run_pipeline(&self.pipeline_context(), cfg)?)
    }

    pub fn inference(&self, api_key: Option<String>) -> InferenceService {
        InferenceService::new(
            self.registry.clone(),
            self.features.clone(),
            self.timelines.clone(),
            self.predictions.clone(),
            self.feedback.clone(),
        )
        .with_api_key(api_key)
    }

    pub fn monitor(&self, config: MonitorConfig) -> Monitor {
        Monitor::new(
            self.registry.clone(),
            self.predictions.clone(),
            self.feedback.clone(),
            self.profiles.clone(),
            self.alerts.clone(),
            config,
        )
    }
}

impl CohortSource for Platform {
    fn cohort(&self, cohort_id: &str) -> Result<Cohort, IngestError> {
        if let Some(c) = self.cohorts.read().get(cohort_id) {
            return Ok(c.clone());
        }
        match &self.root {
            Some(root) => load_cohort(root, cohort_id),
            None => Err(IngestError::CohortNotFound(cohort_id.into())),
        }
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::importance::{permutation_importance, FeatureImportance, DEFAULT_REPEATS};
use super::logreg::{fit_platt, train_logreg, train_logreg_standardized, Hyperparameters};
use super::metrics::{accuracy, auc, brier};
use super::TrainError;
use crate::domain::{Cohort, Digest};
use crate::features::{FeatureRef, FeatureRepository, FeatureVector, TimelineSource, VectorPolicy};
use crate::ingest::{load_cohort, split_cohort, IngestError};
use crate::monitoring::{ProfileStore, ReferenceProfile};
use crate::registry::{
    code_revision, score_linear, ModelArtifact, ModelRegistry, ModelSpec, ModelSpecDraft, ProvenanceFeature,
    ProvenanceRecord, RegistryError, DECISION_THRESHOLD,
};
use crate::workspace::DataRoot;

pub const ALGORITHM: &str = "logreg_sgd";
pub const FEATURE_IMPORTANCE_TOPK: &str = "feature_importance_topk";
pub const PROVENANCE_SUMMARY: &str = "provenance_summary";

/// Training configuration, loadable from TOML.
///
/// `features` entries are `name` (latest catalog version) or `name@vN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task_id: String,
    pub cohort_id: String,
    /// Defaults to `<task_id>-logreg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub features: Vec<String>,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// (train, test) fractions.
    #[serde(default = "default_split")]
    pub split: (f64, f64),
    #[serde(default = "yes")]
    pub calibrate: bool,
    /// Fit on z-scored columns; the stored coefficients always apply to raw values.
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "default_primary_metric")]
    pub primary_metric: String,
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
    #[serde(default = "default_metadata_generators")]
    pub metadata_generators: Vec<String>,
    /// Empty means in-process serving of the stored artifact.
    #[serde(default)]
    pub serving_handle: String,
    #[serde(default = "default_repeats")]
    pub importance_repeats: usize,
}

fn default_algorithm() -> String {
    ALGORITHM.into()
}
fn default_split() -> (f64, f64) {
    (0.8, 0.2)
}
fn yes() -> bool {
    true
}
fn default_primary_metric() -> String {
    crate::registry::DEFAULT_PRIMARY_METRIC.into()
}
fn default_threshold() -> f64 {
    0.5
}
fn default_metadata_generators() -> Vec<String> {
    vec![FEATURE_IMPORTANCE_TOPK.into(), PROVENANCE_SUMMARY.into()]
}
fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

impl TrainConfig {
    pub fn new(task_id: &str, cohort_id: &str, features: &[&str]) -> Self {
        TrainConfig {
            task_id: task_id.into(),
            cohort_id: cohort_id.into(),
            model_id: None,
            features: features.iter().map(|s| s.to_string()).collect(),
            algorithm: default_algorithm(),
            hyperparameters: Hyperparameters::default(),
            split: default_split(),
            calibrate: true,
            standardize: true,
            primary_metric: default_primary_metric(),
            decision_threshold: default_threshold(),
            metadata_generators: default_metadata_generators(),
            serving_handle: String::new(),
            importance_repeats: default_repeats(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn model_id(&self) -> String {
        self.model_id.clone().unwrap_or_else(|| format!("{}-logreg", self.task_id))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.algorithm != ALGORITHM {
            return Err(TrainError::Config(format!("unsupported algorithm {:?}", self.algorithm)));
        }
        if self.features.is_empty() {
            return Err(TrainError::Config("at least one feature is required".into()));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(TrainError::Config("decision_threshold must be in [0, 1]".into()));
        }
        self.hyperparameters.validate()
    }
}

/// Held-out evaluation of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_train: f64,
    pub auc_test: f64,
    pub accuracy_test: f64,
    pub brier_test: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub label_prevalence: f64,
}

impl EvalReport {
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        [
            ("auc_train", self.auc_train),
            ("auc_test", self.auc_test),
            ("accuracy_test", self.accuracy_test),
            ("brier_test", self.brier_test),
            ("label_prevalence", self.label_prevalence),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn table(&self) -> String {
        format!(
            "metric            value\n\
             auc_train         {:.4}\n\
             auc_test          {:.4}\n\
             accuracy_test     {:.4}\n\
             brier_test        {:.4}\n\
             label_prevalence  {:.4}\n\
             n_train           {}\n\
             n_test            {}\n",
            self.auc_train, self.auc_test, self.accuracy_test, self.brier_test, self.label_prevalence, self.n_train, self.n_test
        )
    }
}

/// Where cohorts are looked up by id.
pub trait CohortSource: Sync {
    fn cohort(&self, cohort_id: &str) -> Result<Cohort, IngestError>;
}

impl CohortSource for DataRoot {
    fn cohort(&self, cohort_id: &str) -> Result<Cohort, IngestError> {
        load_cohort(self, cohort_id)
    }
}

impl CohortSource for BTreeMap<String, Cohort> {
    fn cohort(&self, cohort_id: &str) -> Result<Cohort, IngestError> {
        self.get(cohort_id).cloned().ok_or_else(|| IngestError::CohortNotFound(cohort_id.into()))
    }
}

pub struct PipelineContext<'a> {
    pub cohorts: &'a dyn CohortSource,
    pub timelines: &'a dyn TimelineSource,
    pub features: &'a FeatureRepository,
    pub registry: &'a ModelRegistry,
    pub profiles: &'a ProfileStore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One training-matrix row, identified by the digest of its feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub patient_id: String,
    pub index_date: NaiveDate,
    pub split: Split,
    pub vector_digest: Digest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub run_id: String,
    pub spec: ModelSpec,
    /// False when an identical model was already registered.
    pub created: bool,
    pub report: EvalReport,
    pub provenance: ProvenanceRecord,
    pub importance: Vec<FeatureImportance>,
    pub rows: Vec<TrainingRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("pipeline run {run_id} failed at stage {stage}: {message}")]
    Failed { run_id: String, stage: &'static str, message: String },
    #[error("could not create a registry draft: {0}")]
    Draft(#[from] RegistryError),
}

impl PipelineError {
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            PipelineError::Failed { stage, .. } => Some(stage),
            PipelineError::Draft(_) => None,
        }
    }
}

struct Matrix {
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
}

/// Parses `name` or `name@vN` and resolves it against the catalog.
pub fn resolve_feature_refs(features: &FeatureRepository, selectors: &[String]) -> Result<Vec<FeatureRef>, String> {
    let mut out = Vec::with_capacity(selectors.len());
    for s in selectors {
        let r = match s.rsplit_once("@v") {
            Some((name, v)) => {
                let version = v.parse().map_err(|_| format!("invalid feature selector {s:?}"))?;
                FeatureRef::new(name, version)
            }
            None => features.latest_refs(std::slice::from_ref(s)).map_err(|e| e.to_string())?.remove(0),
        };
        if features.entry(&r).is_none() {
            return Err(format!("feature {r} is not in the catalog"));
        }
        out.push(r);
    }
    Ok(out)
}

/// Runs split → features → vectors → train → calibrate → evaluate →
/// importance → provenance → register → profile, recording progress on a
/// registry draft. Any failure marks the draft `failed:<stage>`.
pub fn run_pipeline(ctx: &PipelineContext<'_>, cfg: &TrainConfig) -> Result<PipelineOutput, PipelineError> {
    let model_id = cfg.model_id();
    let run_id = ctx.registry.start_run(&cfg.task_id, &model_id)?;
    let mut stage: &'static str = "config";
    let result = execute(ctx, cfg, &model_id, &run_id, &mut stage);
    match result {
        Ok(out) => Ok(out),
        Err(message) => {
            // The failure itself is the error worth reporting; a second
            // failure writing the marker is only logged.
            if let Err(e) = ctx.registry.run_failed(&run_id, stage, &message) {
                tracing::warn!(run_id, error = %e, "could not mark run as failed");
            }
            Err(PipelineError::Failed { run_id, stage, message })
        }
    }
}

fn execute(
    ctx: &PipelineContext<'_>,
    cfg: &TrainConfig,
    model_id: &str,
    run_id: &str,
    stage: &mut &'static str,
) -> Result<PipelineOutput, String> {
    let reg = ctx.registry;
    let mut enter = |s: &'static str| -> Result<(), String> {
        *stage = s;
        reg.run_progress(run_id, s).map_err(|e| e.to_string())
    };
    let err = |e: &dyn std::fmt::Display| e.to_string();

    enter("config")?;
    cfg.validate().map_err(|e| err(&e))?;

    enter("split")?;
    let cohort = ctx.cohorts.cohort(&cfg.cohort_id).map_err(|e| err(&e))?;
    let (train, test) = split_cohort(&cohort, cfg.split, cfg.hyperparameters.seed).map_err(|e| err(&e))?;

    enter("features")?;
    let refs = resolve_feature_refs(ctx.features, &cfg.features)?;
    let points: Vec<(String, NaiveDate)> =
        cohort.rows.iter().map(|r| (r.patient_id.clone(), r.index_date)).collect();
    let mat = ctx.features.materialize_points(ctx.timelines, &refs, &points).map_err(|e| err(&e))?;
    if let Some(f) = mat.failures.first() {
        return Err(format!(
            "{} feature cells failed; first: {} for {} at {}: {}",
            mat.failures.len(),
            f.feature,
            f.patient_id,
            f.as_of_date,
            f.error
        ));
    }
    tracing::info!(run_id, written = mat.written, skipped = mat.skipped, "features materialized");

    enter("vectors")?;
    let mut rows = Vec::with_capacity(cohort.rows.len());
    let mut build = |c: &Cohort, split: Split| -> Result<Matrix, String> {
        let mut m = Matrix { x: Vec::with_capacity(c.rows.len()), y: Vec::with_capacity(c.rows.len()) };
        for r in &c.rows {
            let (v, _) = ctx
                .features
                .get_vector_asof(None, &r.patient_id, &refs, r.index_date, VectorPolicy::PrecomputedOnly)
                .map_err(|e| err(&e))?;
            m.x.push(model_input(&v)?);
            m.y.push(r.label);
            rows.push(TrainingRow {
                patient_id: r.patient_id.clone(),
                index_date: r.index_date,
                split,
                vector_digest: v.vector_digest,
            });
        }
        Ok(m)
    };
    let train_m = build(&train, Split::Train)?;
    let test_m = build(&test, Split::Test)?;

    enter("train")?;
    let model = if cfg.standardize {
        train_logreg_standardized(&train_m.x, &train_m.y, &cfg.hyperparameters)
    } else {
        train_logreg(&train_m.x, &train_m.y, &cfg.hyperparameters)
    }
    .map_err(|e| err(&e))?;

    enter("calibrate")?;
    let train_raw = model.raw_scores(&train_m.x);
    let calibration = if cfg.calibrate { Some(fit_platt(&train_raw, &train_m.y).map_err(|e| err(&e))?) } else { None };
    let artifact = ModelArtifact::linear(model.intercept, model.coefficients.clone(), calibration).map_err(|e| err(&e))?;

    enter("evaluate")?;
    let probs = |x: &[Vec<f64>]| -> Result<Vec<f64>, String> {
        x.iter().map(|r| score_linear(&artifact, r).map(|s| s.probability).map_err(|e| err(&e))).collect()
    };
    let train_p = probs(&train_m.x)?;
    let test_p = probs(&test_m.x)?;
    let report = EvalReport {
        auc_train: auc(&train_p, &train_m.y).map_err(|e| format!("train set: {e}"))?,
        auc_test: auc(&test_p, &test_m.y).map_err(|e| format!("test set: {e}"))?,
        accuracy_test: accuracy(&test_p, &test_m.y, 0.5).map_err(|e| err(&e))?,
        brier_test: brier(&test_p, &test_m.y).map_err(|e| err(&e))?,
        n_train: train_m.y.len(),
        n_test: test_m.y.len(),
        label_prevalence: cohort.positives() as f64 / cohort.rows.len() as f64,
    };

    enter("importance")?;
    let names: Vec<String> = refs.iter().map(|r| r.name.clone()).collect();
    let importance = permutation_importance(
        &model,
        &test_m.x,
        &test_m.y,
        &names,
        cfg.hyperparameters.seed,
        cfg.importance_repeats,
    )
    .map_err(|e| err(&e))?;

    enter("provenance")?;
    let mut feature_definitions = Vec::with_capacity(refs.len());
    for r in &refs {
        let entry = ctx.features.entry(r).ok_or_else(|| format!("feature {r} vanished from the catalog"))?;
        feature_definitions.push(ProvenanceFeature {
            name: r.name.clone(),
            version: r.version,
            generator_id: entry.definition.generator_id.clone(),
            params_digest: entry.definition.params_digest().map_err(|e| err(&e))?,
        });
    }
    let hp = &cfg.hyperparameters;
    let hyperparameters: BTreeMap<String, serde_json::Value> = [
        ("learning_rate", json!(hp.learning_rate)),
        ("epochs", json!(hp.epochs)),
        ("l2", json!(hp.l2)),
        ("batch_size", json!(hp.batch_size)),
        ("seed", json!(hp.seed)),
        ("split", json!([cfg.split.0, cfg.split.1])),
        ("calibrate", json!(cfg.calibrate)),
        ("standardize", json!(cfg.standardize)),
        ("decision_threshold", json!(cfg.decision_threshold)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let provenance = ProvenanceRecord::new(
        train.data_digest.clone(),
        test.data_digest.clone(),
        feature_definitions,
        ALGORITHM,
        hyperparameters,
        report.metrics(),
        code_revision(),
        Utc::now(),
    )
    .map_err(|e| err(&e))?;
    let blobs = reg.blobs();
    blobs.put_record(&train).map_err(|e| err(&e))?;
    blobs.put_record(&test).map_err(|e| err(&e))?;

    enter("register")?;
    reg.set_primary_metric(&cfg.task_id, &cfg.primary_metric).map_err(|e| err(&e))?;
    let draft = ModelSpecDraft {
        task_id: cfg.task_id.clone(),
        model_id: model_id.to_string(),
        serving_handle: cfg.serving_handle.clone(),
        feature_refs: refs.clone(),
        metadata_generator_ids: cfg.metadata_generators.clone(),
        provenance_ref: provenance.record_digest.clone(),
        metrics: report.metrics(),
        thresholds: [(DECISION_THRESHOLD.to_string(), cfg.decision_threshold)].into(),
    };
    let outcome = reg.register_model(draft, &artifact, &provenance).map_err(|e| err(&e))?;

    enter("profile")?;
    let profile = ReferenceProfile::build(model_id, outcome.version, &refs, &train_m.x, &train_p).map_err(|e| err(&e))?;
    ctx.profiles.save(&profile).map_err(|e| err(&e))?;

    reg.run_completed(run_id, model_id, outcome.version).map_err(|e| err(&e))?;
    let spec = reg.get(model_id, outcome.version).ok_or("registered model disappeared")?;
    // On an idempotent re-run the stored record keeps its original timestamp.
    let provenance = reg.provenance(&spec.provenance_ref).map_err(|e| err(&e))?;
    Ok(PipelineOutput {
        run_id: run_id.to_string(),
        spec,
        created: outcome.created,
        report,
        provenance,
        importance,
        rows,
    })
}

/// Model input for a vector: numeric values, missing as 0.
pub fn model_input(v: &FeatureVector) -> Result<Vec<f64>, String> {
    v.numeric_values().map_err(|e| e.to_string())
}

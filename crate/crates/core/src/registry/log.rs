use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::blobs::{BlobStore, ContentAddressed};
use super::types::{ModelArtifact, ModelSpec, ModelSpecDraft, ProvenanceRecord, Stage};
use super::RegistryError;
use crate::jsonl::{self, Appender};

pub const DEFAULT_PRIMARY_METRIC: &str = "auc_test";

const SYSTEM_ACTOR: &str = "system";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RegistryEvent {
    TaskConfigured { task_id: String, primary_metric: String },
    RunStarted { run_id: String, task_id: String, model_id: String, at: DateTime<Utc> },
    RunProgress { run_id: String, stage: String, at: DateTime<Utc> },
    RunFailed { run_id: String, stage: String, error: String, at: DateTime<Utc> },
    RunCompleted { run_id: String, model_id: String, version: u32, at: DateTime<Utc> },
    ModelRegistered { spec: ModelSpec },
    StageChanged(StageTransition),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTransition {
    pub model_id: String,
    pub version: u32,
    pub from: Stage,
    pub to: Stage,
    pub actor: String,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LoggedEvent {
    seq: u64,
    #[serde(flatten)]
    event: RegistryEvent,
}

/// Status of a training run as seen by the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub task_id: String,
    pub model_id: String,
    /// `running:<stage>`, `failed:<stage>` or `registered`.
    pub status: String,
    pub started_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterOutcome {
    pub version: u32,
    pub created: bool,
}

#[derive(Debug, Default)]
struct State {
    models: BTreeMap<String, Vec<ModelSpec>>,
    runs: BTreeMap<String, RunRecord>,
    audit: Vec<StageTransition>,
    primary_metrics: BTreeMap<String, String>,
    next_seq: u64,
}

impl State {
    fn apply(&mut self, seq: u64, event: RegistryEvent) {
        self.next_seq = self.next_seq.max(seq + 1);
        match event {
            RegistryEvent::TaskConfigured { task_id, primary_metric } => {
                self.primary_metrics.insert(task_id, primary_metric);
            }
            RegistryEvent::RunStarted { run_id, task_id, model_id, at } => {
                self.runs.insert(
                    run_id.clone(),
                    RunRecord { run_id, task_id, model_id, status: "running:draft".into(), started_at: at, error: None, version: None },
                );
            }
            RegistryEvent::RunProgress { run_id, stage, .. } => {
                if let Some(r) = self.runs.get_mut(&run_id) {
                    r.status = format!("running:{stage}");
                }
            }
            RegistryEvent::RunFailed { run_id, stage, error, .. } => {
                if let Some(r) = self.runs.get_mut(&run_id) {
                    r.status = format!("failed:{stage}");
                    r.error = Some(error);
                }
            }
            RegistryEvent::RunCompleted { run_id, version, .. } => {
                if let Some(r) = self.runs.get_mut(&run_id) {
                    r.status = "registered".into();
                    r.version = Some(version);
                }
            }
            RegistryEvent::ModelRegistered { spec } => {
                self.models.entry(spec.model_id.clone()).or_default().push(spec);
            }
            RegistryEvent::StageChanged(t) => {
                if let Some(spec) = self.spec_mut(&t.model_id, t.version) {
                    spec.stage = t.to;
                }
                self.audit.push(t);
            }
        }
    }

    fn spec(&self, model_id: &str, version: u32) -> Option<&ModelSpec> {
        self.models.get(model_id)?.iter().find(|s| s.version == version)
    }

    fn spec_mut(&mut self, model_id: &str, version: u32) -> Option<&mut ModelSpec> {
        self.models.get_mut(model_id)?.iter_mut().find(|s| s.version == version)
    }
}

/// Append-only event log folded into in-memory state.
///
/// Reads take a shared lock; every write holds a single writer lock for the
/// whole validate-append-apply sequence, so writes are globally serialized.
#[derive(Debug)]
pub struct ModelRegistry {
    state: RwLock<State>,
    writer: Mutex<Option<Appender>>,
    log_path: Option<PathBuf>,
    blobs: Arc<BlobStore>,
}

impl ModelRegistry {
    pub fn in_memory() -> Self {
        ModelRegistry {
            state: RwLock::default(),
            writer: Mutex::new(None),
            log_path: None,
            blobs: Arc::new(BlobStore::in_memory()),
        }
    }

    /// Opens (or creates) a registry backed by `log_path` and a blob store
    /// rooted at `blob_root`.
    pub fn open(log_path: &Path, blob_root: &Path) -> Result<Self, RegistryError> {
        let reg = ModelRegistry {
            state: RwLock::default(),
            writer: Mutex::new(Some(Appender::open(log_path)?)),
            log_path: Some(log_path.to_path_buf()),
            blobs: Arc::new(BlobStore::open(blob_root)?),
        };
        reg.refresh()?;
        Ok(reg)
    }

    pub fn blobs(&self) -> &Arc<BlobStore> {
        &self.blobs
    }

    /// Applies events appended to the log by other processes.
    pub fn refresh(&self) -> Result<(), RegistryError> {
        let Some(path) = &self.log_path else { return Ok(()) };
        let events: Vec<LoggedEvent> = jsonl::read_all(path)?;
        let mut state = self.state.write();
        for e in events {
            if e.seq >= state.next_seq {
                state.apply(e.seq, e.event);
            }
        }
        Ok(())
    }

    fn commit(&self, writer: &mut Option<Appender>, events: Vec<RegistryEvent>) -> Result<(), RegistryError> {
        let mut state = self.state.write();
        for event in events {
            let seq = state.next_seq;
            if let Some(w) = writer.as_mut() {
                w.append(&LoggedEvent { seq, event: event.clone() })?;
            }
            state.apply(seq, event);
        }
        Ok(())
    }

    /// Runs `f` under the writer lock against freshly refreshed state.
    fn write<T>(
        &self,
        f: impl FnOnce(&State) -> Result<(T, Vec<RegistryEvent>), RegistryError>,
    ) -> Result<T, RegistryError> {
        let mut writer = self.writer.lock();
        self.refresh()?;
        let (out, events) = f(&self.state.read())?;
        self.commit(&mut writer, events)?;
        Ok(out)
    }

    pub fn set_primary_metric(&self, task_id: &str, metric: &str) -> Result<(), RegistryError> {
        self.write(|s| {
            let same = s.primary_metrics.get(task_id).map(String::as_str) == Some(metric);
            let events = if same {
                vec![]
            } else {
                vec![RegistryEvent::TaskConfigured { task_id: task_id.into(), primary_metric: metric.into() }]
            };
            Ok(((), events))
        })
    }

    pub fn primary_metric(&self, task_id: &str) -> String {
        self.state
            .read()
            .primary_metrics
            .get(task_id)
            .cloned()
            .unwrap_or_else(|| DEFAULT_PRIMARY_METRIC.to_string())
    }

    pub fn start_run(&self, task_id: &str, model_id: &str) -> Result<String, RegistryError> {
        let run_id = format!("run-{}", uuid::Uuid::new_v4().simple());
        let id = run_id.clone();
        self.write(|_| {
            Ok(((), vec![RegistryEvent::RunStarted { run_id: id, task_id: task_id.into(), model_id: model_id.into(), at: Utc::now() }]))
        })?;
        Ok(run_id)
    }

    pub fn run_progress(&self, run_id: &str, stage: &str) -> Result<(), RegistryError> {
        self.write(|s| {
            s.runs.get(run_id).ok_or_else(|| RegistryError::NotFound(format!("run {run_id}")))?;
            Ok(((), vec![RegistryEvent::RunProgress { run_id: run_id.into(), stage: stage.into(), at: Utc::now() }]))
        })
    }

    pub fn run_failed(&self, run_id: &str, stage: &str, error: &str) -> Result<(), RegistryError> {
        self.write(|s| {
            s.runs.get(run_id).ok_or_else(|| RegistryError::NotFound(format!("run {run_id}")))?;
            Ok((
                (),
                vec![RegistryEvent::RunFailed { run_id: run_id.into(), stage: stage.into(), error: error.into(), at: Utc::now() }],
            ))
        })
    }

    pub fn run_completed(&self, run_id: &str, model_id: &str, version: u32) -> Result<(), RegistryError> {
        self.write(|s| {
            s.runs.get(run_id).ok_or_else(|| RegistryError::NotFound(format!("run {run_id}")))?;
            Ok((
                (),
                vec![RegistryEvent::RunCompleted { run_id: run_id.into(), model_id: model_id.into(), version, at: Utc::now() }],
            ))
        })
    }

    pub fn get_run(&self, run_id: &str) -> Option<RunRecord> {
        self.state.read().runs.get(run_id).cloned()
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.state.read().runs.values().cloned().collect()
    }

    /// Registers a new model version in stage `None`.
    ///
    /// The artifact and provenance record are verified and written to the
    /// blob store first. Registering the same artifact and provenance under
    /// the same model id again returns the existing version.
    pub fn register_model(
        &self,
        draft: ModelSpecDraft,
        artifact: &ModelArtifact,
        provenance: &ProvenanceRecord,
    ) -> Result<RegisterOutcome, RegistryError> {
        validate_draft(&draft, artifact, provenance)?;
        self.blobs.put_record(provenance)?;
        self.blobs.put_record(artifact)?;
        self.write(|s| {
            let existing = s.models.get(&draft.model_id).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(prev) = existing
                .iter()
                .find(|m| m.artifact_digest == artifact.artifact_digest && m.provenance_ref == draft.provenance_ref)
            {
                return Ok((RegisterOutcome { version: prev.version, created: false }, vec![]));
            }
            if let Some(other) = existing.first().filter(|m| m.task_id != draft.task_id) {
                return Err(RegistryError::Spec(format!(
                    "model id {} already belongs to task {}",
                    draft.model_id, other.task_id
                )));
            }
            let version = existing.iter().map(|m| m.version).max().unwrap_or(0) + 1;
            let serving_handle = if draft.serving_handle.is_empty() {
                format!("inproc://sha256/{}", artifact.artifact_digest)
            } else {
                draft.serving_handle
            };
            let spec = ModelSpec {
                task_id: draft.task_id,
                model_id: draft.model_id,
                version,
                stage: Stage::None,
                serving_handle,
                feature_refs: draft.feature_refs,
                metadata_generator_ids: draft.metadata_generator_ids,
                provenance_ref: draft.provenance_ref,
                metrics: draft.metrics,
                thresholds: draft.thresholds,
                artifact_digest: artifact.artifact_digest.clone(),
                registered_at: Utc::now(),
                sequence: s.next_seq,
            };
            Ok((RegisterOutcome { version, created: true }, vec![RegistryEvent::ModelRegistered { spec }]))
        })
    }

    /// Moves a version to `to`. Promoting to Production archives the
    /// previous Production version of the same model id first.
    pub fn transition_stage(&self, model_id: &str, version: u32, to: Stage, actor: &str) -> Result<ModelSpec, RegistryError> {
        self.write(|s| {
            let spec = s
                .spec(model_id, version)
                .ok_or_else(|| RegistryError::NotFound(format!("model {model_id} v{version}")))?;
            let from = spec.stage;
            if !from.can_transition_to(to) {
                return Err(RegistryError::Transition { model_id: model_id.into(), version, from, to });
            }
            let now = Utc::now();
            let mut events = Vec::new();
            if to == Stage::Production {
                for prev in s.models[model_id].iter().filter(|m| m.stage == Stage::Production) {
                    events.push(RegistryEvent::StageChanged(StageTransition {
                        model_id: model_id.into(),
                        version: prev.version,
                        from: Stage::Production,
                        to: Stage::Archived,
                        actor: SYSTEM_ACTOR.into(),
                        at: now,
                        reason: Some(format!("superseded by v{version}")),
                    }));
                }
            }
            events.push(RegistryEvent::StageChanged(StageTransition {
                model_id: model_id.into(),
                version,
                from,
                to,
                actor: actor.into(),
                at: now,
                reason: None,
            }));
            Ok(((), events))
        })?;
        Ok(self.get(model_id, version).expect("spec exists after transition"))
    }

    pub fn get(&self, model_id: &str, version: u32) -> Option<ModelSpec> {
        self.state.read().spec(model_id, version).cloned()
    }

    pub fn versions(&self, model_id: &str) -> Vec<ModelSpec> {
        self.state.read().models.get(model_id).cloned().unwrap_or_default()
    }

    /// All specs, optionally filtered by task, ordered by (model id, version).
    pub fn list(&self, task_id: Option<&str>) -> Vec<ModelSpec> {
        self.state
            .read()
            .models
            .values()
            .flatten()
            .filter(|m| task_id.is_none_or(|t| m.task_id == t))
            .cloned()
            .collect()
    }

    /// The Production model for `task_id` scoring highest on the task's
    /// primary metric; later registration wins ties.
    pub fn get_best_model(&self, task_id: &str) -> Result<ModelSpec, RegistryError> {
        let metric = self.primary_metric(task_id);
        let state = self.state.read();
        state
            .models
            .values()
            .flatten()
            .filter(|m| m.task_id == task_id && m.stage == Stage::Production)
            .max_by(|a, b| {
                let ma = a.metrics.get(&metric).copied().unwrap_or(f64::NEG_INFINITY);
                let mb = b.metrics.get(&metric).copied().unwrap_or(f64::NEG_INFINITY);
                ma.total_cmp(&mb).then(a.registered_at.cmp(&b.registered_at)).then(a.sequence.cmp(&b.sequence))
            })
            .cloned()
            .ok_or_else(|| RegistryError::NoModel(task_id.into()))
    }

    pub fn audit_log(&self) -> Vec<StageTransition> {
        self.state.read().audit.clone()
    }

    pub fn provenance(&self, digest: &crate::domain::Digest) -> Result<ProvenanceRecord, RegistryError> {
        self.blobs.get_record(digest)
    }

    pub fn artifact(&self, digest: &crate::domain::Digest) -> Result<ModelArtifact, RegistryError> {
        self.blobs.get_record(digest)
    }
}

fn validate_draft(draft: &ModelSpecDraft, artifact: &ModelArtifact, prov: &ProvenanceRecord) -> Result<(), RegistryError> {
    if draft.task_id.is_empty() || draft.model_id.is_empty() {
        return Err(RegistryError::Spec("task_id and model_id are required".into()));
    }
    if draft.feature_refs.is_empty() {
        return Err(RegistryError::Spec("feature_refs must not be empty".into()));
    }
    if artifact.coefficients.len() != draft.feature_refs.len() {
        return Err(RegistryError::Spec(format!(
            "artifact has {} coefficients for {} features",
            artifact.coefficients.len(),
            draft.feature_refs.len()
        )));
    }
    if artifact.content_digest()? != artifact.artifact_digest {
        return Err(RegistryError::Integrity("artifact digest does not match content".into()));
    }
    if prov.content_digest()? != prov.record_digest {
        return Err(RegistryError::Integrity("provenance digest does not match content".into()));
    }
    if draft.provenance_ref != prov.record_digest {
        return Err(RegistryError::Integrity(format!(
            "provenance_ref {} does not name the supplied record {}",
            draft.provenance_ref, prov.record_digest
        )));
    }
    Ok(())
}

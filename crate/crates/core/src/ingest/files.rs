//! Dataset files under a data root.
//!
//! * `patients.jsonl`: one [`PatientRecord`] per line.
//! * `events-<name>.jsonl`: one [`ClaimEvent`] per line.
//! * `cohorts/cohort-<id>.jsonl`: a [`CohortHeader`] line followed by one
//!   [`CohortRow`] per line, with the data digest repeated in the sidecar
//!   `cohorts/cohort-<id>.digest`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{ClaimEvent, Cohort, CohortRow, Digest, PatientTimeline, Sex, TargetSpec};
use crate::jsonl;
use crate::workspace::DataRoot;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub birth_date: NaiveDate,
    pub sex: Sex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortHeader {
    pub cohort_id: String,
    pub target_spec: TargetSpec,
    pub data_digest: Digest,
    pub n_rows: usize,
}

/// Writes demographics to `patients.jsonl` and events to `events-<name>.jsonl`.
pub fn save_timelines(root: &DataRoot, name: &str, timelines: &[PatientTimeline]) -> Result<usize, IngestError> {
    let patients: Vec<PatientRecord> = timelines
        .iter()
        .map(|t| PatientRecord { patient_id: t.patient_id.clone(), birth_date: t.birth_date, sex: t.sex })
        .collect();
    jsonl::write_all(&root.patients(), &patients)?;
    let n = jsonl::write_all(&root.events_file(name), timelines.iter().flat_map(|t| t.events.iter()))?;
    Ok(n)
}

pub fn save_events(root: &DataRoot, name: &str, events: &[ClaimEvent]) -> Result<usize, IngestError> {
    Ok(jsonl::write_all(&root.events_file(name), events)?)
}

#[derive(Debug, Clone, Default)]
pub struct LoadedTimelines {
    pub timelines: Vec<PatientTimeline>,
    /// Events whose patient has no demographics record.
    pub orphan_events: usize,
}

/// Loads all patients and every `events-*.jsonl` file, ordered by patient id.
pub fn load_timelines(root: &DataRoot) -> Result<LoadedTimelines, IngestError> {
    let patients: Vec<PatientRecord> = jsonl::read_all(&root.patients())?;
    let mut events: BTreeMap<String, Vec<ClaimEvent>> =
        patients.iter().map(|p| (p.patient_id.clone(), Vec::new())).collect();
    let mut orphan_events = 0;
    for file in root.event_files()? {
        for ev in jsonl::read_all::<ClaimEvent>(&file)? {
            match events.get_mut(&ev.patient_id) {
                Some(list) => list.push(ev),
                None => orphan_events += 1,
            }
        }
    }
    let mut timelines: Vec<PatientTimeline> = patients
        .into_iter()
        .map(|p| {
            let evs = events.remove(&p.patient_id).unwrap_or_default();
            PatientTimeline::new(p.patient_id, p.birth_date, p.sex, evs)
        })
        .collect();
    timelines.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(LoadedTimelines { timelines, orphan_events })
}

pub fn save_cohort(root: &DataRoot, cohort: &Cohort) -> Result<std::path::PathBuf, IngestError> {
    let dir = root.cohorts_dir();
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("cohort-{}.jsonl", cohort.cohort_id));
    let header = CohortHeader {
        cohort_id: cohort.cohort_id.clone(),
        target_spec: cohort.target_spec.clone(),
        data_digest: cohort.data_digest.clone(),
        n_rows: cohort.rows.len(),
    };
    let mut out = BufWriter::new(File::create(&path)?);
    serde_json::to_writer(&mut out, &header).map_err(jsonl::JsonlError::from)?;
    out.write_all(b"\n")?;
    for row in &cohort.rows {
        serde_json::to_writer(&mut out, row).map_err(jsonl::JsonlError::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    std::fs::write(dir.join(format!("cohort-{}.digest", cohort.cohort_id)), format!("{}\n", cohort.data_digest))?;
    Ok(path)
}

/// Loads a cohort and checks its digest against the header, the sidecar
/// and a recomputation over the rows.
pub fn load_cohort(root: &DataRoot, cohort_id: &str) -> Result<Cohort, IngestError> {
    let dir = root.cohorts_dir();
    let path = dir.join(format!("cohort-{cohort_id}.jsonl"));
    let file = File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::CohortNotFound(cohort_id.to_string()),
        _ => e.into(),
    })?;
    let mut lines = BufReader::new(file).lines();
    let corrupt = |why: &str| IngestError::Corrupt(format!("{}: {why}", path.display()));
    let header: CohortHeader = match lines.next() {
        Some(l) => serde_json::from_str(&l?).map_err(|e| corrupt(&e.to_string()))?,
        None => return Err(corrupt("empty file")),
    };
    let mut rows = Vec::with_capacity(header.n_rows);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str::<CohortRow>(&line).map_err(|e| corrupt(&e.to_string()))?);
    }
    let sidecar = std::fs::read_to_string(dir.join(format!("cohort-{cohort_id}.digest")))?;
    let cohort = Cohort {
        cohort_id: header.cohort_id,
        target_spec: header.target_spec,
        rows,
        data_digest: header.data_digest,
    };
    if sidecar.trim() != cohort.data_digest.hex() || !cohort.verify() || cohort.rows.len() != header.n_rows {
        return Err(corrupt("data digest does not match content"));
    }
    Ok(cohort)
}

/// Ids of all cohorts saved under the data root.
pub fn list_cohorts(root: &DataRoot) -> Result<Vec<String>, IngestError> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(root.cohorts_dir()) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e.into()),
    };
    for entry in entries {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_prefix("cohort-").and_then(|n| n.strip_suffix(".jsonl")) {
            out.push(id.to_string());
        }
    }
    out.sort();
    Ok(out)
}

/// Shared, appendable map of timelines keyed by patient id.
#[derive(Debug, Default)]
pub struct TimelineStore {
    inner: RwLock<HashMap<String, Arc<PatientTimeline>>>,
}

impl TimelineStore {
    pub fn new(timelines: impl IntoIterator<Item = PatientTimeline>) -> Self {
        TimelineStore {
            inner: RwLock::new(timelines.into_iter().map(|t| (t.patient_id.clone(), Arc::new(t))).collect()),
        }
    }

    pub fn get(&self, patient_id: &str) -> Option<Arc<PatientTimeline>> {
        self.inner.read().get(patient_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, timeline: PatientTimeline) {
        self.inner.write().insert(timeline.patient_id.clone(), Arc::new(timeline));
    }

    /// Appends an event to an existing patient's timeline. Returns false if
    /// the patient is unknown.
    pub fn append_event(&self, event: ClaimEvent) -> bool {
        let mut map = self.inner.write();
        match map.get_mut(&event.patient_id) {
            Some(t) => {
                Arc::make_mut(t).push_event(event);
                true
            }
            None => false,
        }
    }

    pub fn patient_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.read().keys().cloned().collect();
        ids.sort();
        ids
    }
}

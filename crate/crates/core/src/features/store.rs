//! Point-in-time value store.
//!
//! Values are keyed by (patient, feature, version, as-of date). On disk each
//! feature name has its own append-only `values-<name>.jsonl`; later lines
//! supersede earlier ones for the same key, and the in-memory index is
//! rebuilt from those files on open.
//!
//! The index is patient-major with interned feature names, so assembling one
//! patient's vector reads a single compact row.
//!
//! Staleness is a per-feature generation mark: a value is stale when it was
//! written before the latest mark for its feature.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureRef, FeatureScalar, FeatureValue};
use crate::jsonl::{self, Appender};

#[derive(Debug, Clone, PartialEq)]
pub struct StoredValue {
    pub value: FeatureScalar,
    pub computed_at: DateTime<Utc>,
    pub generation: u64,
}

/// (interned feature name, version, as-of date)
type CellKey = (u32, u32, NaiveDate);
type PatientRow = HashMap<CellKey, StoredValue>;

#[derive(Debug, Default)]
struct Index {
    names: HashMap<String, u32>,
    rows: HashMap<String, PatientRow>,
}

impl Index {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.names.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("feature name count fits u32");
        self.names.insert(name.to_string(), id);
        id
    }

    fn names_by_id(&self) -> Vec<&str> {
        let mut names = vec![""; self.names.len()];
        for (n, &id) in &self.names {
            names[id as usize] = n;
        }
        names
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StaleMark {
    feature_name: String,
    generation: u64,
}

#[derive(Debug, Default)]
pub struct FeatureStore {
    dir: Option<PathBuf>,
    index: RwLock<Index>,
    /// One appender per feature name; holding it serializes that feature's writers.
    logs: Mutex<HashMap<String, Arc<Mutex<Option<Appender>>>>>,
    stale_marks: RwLock<HashMap<String, u64>>,
    marks_log: Mutex<Option<Appender>>,
    next_generation: AtomicU64,
}

const MARKS_FILE: &str = "_marks.jsonl";

impl FeatureStore {
    pub fn in_memory() -> Self {
        FeatureStore { next_generation: AtomicU64::new(1), ..Default::default() }
    }

    pub fn open(dir: &Path) -> Result<Self, FeatureError> {
        std::fs::create_dir_all(dir)?;
        let store = FeatureStore { dir: Some(dir.to_path_buf()), ..Self::in_memory() };
        let mut max_gen = 0;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("values-") && n.ends_with(".jsonl"))
            })
            .collect();
        files.sort();
        {
            let mut index = store.index.write();
            for file in files {
                for v in jsonl::read_all::<FeatureValue>(&file)? {
                    max_gen = max_gen.max(v.generation);
                    let id = index.intern(&v.feature_name);
                    index.rows.entry(v.patient_id).or_default().insert(
                        (id, v.feature_version, v.as_of_date),
                        StoredValue { value: v.value, computed_at: v.computed_at, generation: v.generation },
                    );
                }
            }
        }
        let marks_path = dir.join(MARKS_FILE);
        for m in jsonl::read_all::<StaleMark>(&marks_path)? {
            max_gen = max_gen.max(m.generation);
            store.stale_marks.write().insert(m.feature_name, m.generation);
        }
        *store.marks_log.lock() = Some(Appender::open(&marks_path)?);
        store.next_generation.store(max_gen + 1, Ordering::SeqCst);
        Ok(store)
    }

    pub fn get(&self, patient_id: &str, feature: &FeatureRef, as_of: NaiveDate) -> Option<StoredValue> {
        let index = self.index.read();
        let id = *index.names.get(&feature.name)?;
        index.rows.get(patient_id)?.get(&(id, feature.version, as_of)).cloned()
    }

    pub fn is_stale(&self, feature_name: &str, value: &StoredValue) -> bool {
        self.stale_marks
            .read()
            .get(feature_name)
            .is_some_and(|&mark| value.generation < mark)
    }

    /// The stored value if present and not stale.
    pub fn get_fresh(&self, patient_id: &str, feature: &FeatureRef, as_of: NaiveDate) -> Option<FeatureScalar> {
        let v = self.get(patient_id, feature, as_of)?;
        (!self.is_stale(&feature.name, &v)).then_some(v.value)
    }

    /// [`get_fresh`](Self::get_fresh) for several features of one patient,
    /// under a single read of the index and staleness marks.
    pub fn get_fresh_many(&self, patient_id: &str, features: &[FeatureRef], as_of: NaiveDate) -> Vec<Option<FeatureScalar>> {
        let index = self.index.read();
        let Some(row) = index.rows.get(patient_id) else {
            return vec![None; features.len()];
        };
        let marks = self.stale_marks.read();
        features
            .iter()
            .map(|f| {
                let id = *index.names.get(&f.name)?;
                let v = row.get(&(id, f.version, as_of))?;
                match marks.get(&f.name) {
                    Some(&mark) if v.generation < mark => None,
                    _ => Some(v.value.clone()),
                }
            })
            .collect()
    }

    fn feature_log(&self, name: &str) -> Arc<Mutex<Option<Appender>>> {
        self.logs.lock().entry(name.to_string()).or_default().clone()
    }

    /// Writes a batch of values for one feature version. Writers to the same
    /// feature name are serialized.
    pub fn put_batch(
        &self,
        feature: &FeatureRef,
        values: Vec<(String, NaiveDate, FeatureScalar)>,
    ) -> Result<usize, FeatureError> {
        if values.is_empty() {
            return Ok(0);
        }
        let log_slot = self.feature_log(&feature.name);
        let mut log = log_slot.lock();
        if log.is_none() {
            if let Some(dir) = &self.dir {
                *log = Some(Appender::open(&dir.join(format!("values-{}.jsonl", feature.name)))?);
            }
        }
        let generation = self.next_generation.fetch_add(1, Ordering::SeqCst);
        let computed_at = Utc::now();
        let n = values.len();
        let mut records = Vec::with_capacity(if log.is_some() { n } else { 0 });
        {
            let mut index = self.index.write();
            let id = index.intern(&feature.name);
            for (patient_id, as_of, value) in values {
                if log.is_some() {
                    records.push(FeatureValue {
                        patient_id: patient_id.clone(),
                        feature_name: feature.name.clone(),
                        feature_version: feature.version,
                        as_of_date: as_of,
                        value: value.clone(),
                        computed_at,
                        generation,
                    });
                }
                index
                    .rows
                    .entry(patient_id)
                    .or_default()
                    .insert((id, feature.version, as_of), StoredValue { value, computed_at, generation });
            }
        }
        if let Some(log) = log.as_mut() {
            for r in &records {
                log.append(r)?;
            }
        }
        Ok(n)
    }

    pub fn mark_stale(&self, names: &BTreeSet<String>) -> Result<(), FeatureError> {
        let mut marks = self.stale_marks.write();
        for name in names {
            let generation = self.next_generation.fetch_add(1, Ordering::SeqCst);
            marks.insert(name.clone(), generation);
            if let Some(log) = self.marks_log.lock().as_mut() {
                log.append(&StaleMark { feature_name: name.clone(), generation })?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.read().rows.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every stored value, ordered by (feature, version, patient, date).
    pub fn snapshot(&self) -> Vec<FeatureValue> {
        let index = self.index.read();
        let names = index.names_by_id();
        let mut out = Vec::new();
        for (patient_id, row) in &index.rows {
            for (&(id, version, as_of), v) in row {
                out.push(FeatureValue {
                    patient_id: patient_id.clone(),
                    feature_name: names[id as usize].to_string(),
                    feature_version: version,
                    as_of_date: as_of,
                    value: v.value.clone(),
                    computed_at: v.computed_at,
                    generation: v.generation,
                });
            }
        }
        out.sort_by(|a, b| {
            (&a.feature_name, a.feature_version, &a.patient_id, a.as_of_date)
                .cmp(&(&b.feature_name, b.feature_version, &b.patient_id, b.as_of_date))
        });
        out
    }
}

use std::collections::HashMap;
use std::path::Path;

use chrono::Utc;
use parking_lot::{Mutex, RwLock};

use super::types::{FeedbackReceipt, FeedbackRecord, PredictionRecord, StoredFeedback};
use super::InferenceError;
use crate::jsonl::{self, Appender};

#[derive(Debug, Default)]
struct PredictionState {
    records: Vec<PredictionRecord>,
    index: HashMap<String, usize>,
}

/// Append-only prediction log. Appends are serialized, so the file order is
/// the total order of the in-memory log.
#[derive(Debug, Default)]
pub struct PredictionLog {
    state: RwLock<PredictionState>,
    writer: Mutex<Option<Appender>>,
}

impl PredictionLog {
    pub fn in_memory() -> Self {
        PredictionLog::default()
    }

    pub fn open(path: &Path) -> Result<Self, InferenceError> {
        let records: Vec<PredictionRecord> = jsonl::read_all(path).map_err(InferenceError::storage)?;
        let index = records.iter().enumerate().map(|(i, r)| (r.request_id.clone(), i)).collect();
        Ok(PredictionLog {
            state: RwLock::new(PredictionState { records, index }),
            writer: Mutex::new(Some(Appender::open(path).map_err(InferenceError::storage)?)),
        })
    }

    pub fn append(&self, record: &PredictionRecord) -> Result<(), InferenceError> {
        let mut writer = self.writer.lock();
        if self.state.read().index.contains_key(&record.request_id) {
            return Err(InferenceError::Internal(format!("duplicate request id {}", record.request_id)));
        }
        if let Some(w) = writer.as_mut() {
            w.append(record).map_err(InferenceError::storage)?;
        }
        let mut s = self.state.write();
        let i = s.records.len();
        s.index.insert(record.request_id.clone(), i);
        s.records.push(record.clone());
        Ok(())
    }

    pub fn get(&self, request_id: &str) -> Option<PredictionRecord> {
        let s = self.state.read();
        s.index.get(request_id).map(|&i| s.records[i].clone())
    }

    pub fn contains(&self, request_id: &str) -> bool {
        self.state.read().index.contains_key(request_id)
    }

    pub fn len(&self) -> usize {
        self.state.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the log in append order.
    pub fn snapshot(&self) -> Vec<PredictionRecord> {
        self.state.read().records.clone()
    }
}

#[derive(Debug, Default)]
struct FeedbackState {
    entries: Vec<StoredFeedback>,
    latest: HashMap<String, usize>,
}

/// Append-only feedback log; the latest version per request wins.
#[derive(Debug, Default)]
pub struct FeedbackLog {
    state: RwLock<FeedbackState>,
    writer: Mutex<Option<Appender>>,
}

impl FeedbackLog {
    pub fn in_memory() -> Self {
        FeedbackLog::default()
    }

    pub fn open(path: &Path) -> Result<Self, InferenceError> {
        let entries: Vec<StoredFeedback> = jsonl::read_all(path).map_err(InferenceError::storage)?;
        let mut latest = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            latest.insert(e.record.request_id.clone(), i);
        }
        Ok(FeedbackLog {
            state: RwLock::new(FeedbackState { entries, latest }),
            writer: Mutex::new(Some(Appender::open(path).map_err(InferenceError::storage)?)),
        })
    }

    /// Stores `record` as a new version unless it repeats the latest payload.
    pub fn submit(&self, mut record: FeedbackRecord) -> Result<FeedbackReceipt, InferenceError> {
        if record.observed_outcome > 1 {
            return Err(InferenceError::BadRequest("observed_outcome must be 0 or 1".into()));
        }
        let mut writer = self.writer.lock();
        let prev = {
            let s = self.state.read();
            s.latest.get(&record.request_id).map(|&i| s.entries[i].clone())
        };
        if let Some(p) = &prev {
            if p.record.same_payload(&record) {
                return Ok(FeedbackReceipt {
                    request_id: record.request_id,
                    feedback_version: p.feedback_version,
                    created: false,
                });
            }
        }
        record.submitted_at.get_or_insert_with(Utc::now);
        let stored = StoredFeedback { feedback_version: prev.map_or(1, |p| p.feedback_version + 1), record };
        if let Some(w) = writer.as_mut() {
            w.append(&stored).map_err(InferenceError::storage)?;
        }
        let mut s = self.state.write();
        let i = s.entries.len();
        s.latest.insert(stored.record.request_id.clone(), i);
        let receipt = FeedbackReceipt {
            request_id: stored.record.request_id.clone(),
            feedback_version: stored.feedback_version,
            created: true,
        };
        s.entries.push(stored);
        Ok(receipt)
    }

    pub fn latest(&self, request_id: &str) -> Option<StoredFeedback> {
        let s = self.state.read();
        s.latest.get(request_id).map(|&i| s.entries[i].clone())
    }

    /// Latest feedback per request id.
    pub fn latest_all(&self) -> HashMap<String, StoredFeedback> {
        let s = self.state.read();
        s.latest.iter().map(|(k, &i)| (k.clone(), s.entries[i].clone())).collect()
    }

    /// Number of stored submissions, all versions.
    pub fn len(&self) -> usize {
        self.state.read().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

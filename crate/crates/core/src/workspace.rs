//! On-disk layout of a data root.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct DataRoot {
    root: PathBuf,
}

impl DataRoot {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataRoot { root: root.into() }
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn patients(&self) -> PathBuf {
        self.root.join("patients.jsonl")
    }

    /// `events-<name>.jsonl`
    pub fn events_file(&self, name: &str) -> PathBuf {
        self.root.join(format!("events-{name}.jsonl"))
    }

    /// All `events-*.jsonl` files, sorted by file name.
    pub fn event_files(&self) -> std::io::Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e),
        };
        for entry in entries {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.starts_with("events-") && name.ends_with(".jsonl") {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn cohorts_dir(&self) -> PathBuf {
        self.root.join("cohorts")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn catalog(&self) -> PathBuf {
        self.root.join("catalog.jsonl")
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    pub fn registry(&self) -> PathBuf {
        self.root.join("registry.jsonl")
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.jsonl")
    }

    pub fn feedback(&self) -> PathBuf {
        self.root.join("feedback.jsonl")
    }

    pub fn alerts(&self) -> PathBuf {
        self.root.join("alerts.jsonl")
    }

    pub fn profiles_dir(&self) -> PathBuf {
        self.root.join("profiles")
    }
}

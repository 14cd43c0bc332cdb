//! Content-addressed blob store at `<root>/sha256/<first2>/<digest>`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::RegistryError;
use crate::domain::{canonical_encode, Cohort, Digest, EncodingError};

/// A record whose identity is a digest over its own content.
pub trait ContentAddressed: Serialize + DeserializeOwned {
    /// The digest the record claims.
    fn declared_digest(&self) -> &Digest;
    /// The digest recomputed from content.
    fn content_digest(&self) -> Result<Digest, EncodingError>;
}

impl ContentAddressed for Cohort {
    fn declared_digest(&self) -> &Digest {
        &self.data_digest
    }

    fn content_digest(&self) -> Result<Digest, EncodingError> {
        Cohort::content_digest(&self.target_spec, &self.rows)
    }
}

#[derive(Debug, Default)]
pub struct BlobStore {
    root: Option<PathBuf>,
    memory: RwLock<HashMap<Digest, Vec<u8>>>,
}

impl BlobStore {
    pub fn in_memory() -> Self {
        BlobStore::default()
    }

    pub fn open(root: &Path) -> Result<Self, RegistryError> {
        std::fs::create_dir_all(root.join("sha256"))?;
        Ok(BlobStore { root: Some(root.to_path_buf()), memory: RwLock::default() })
    }

    pub fn path_for(&self, digest: &Digest) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join("sha256").join(&digest.hex()[..2]).join(digest.hex()))
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        match self.path_for(digest) {
            Some(p) => p.exists(),
            None => self.memory.read().contains_key(digest),
        }
    }

    /// Writes `bytes` under `digest` unless already present.
    pub fn put(&self, digest: &Digest, bytes: &[u8]) -> Result<(), RegistryError> {
        match self.path_for(digest) {
            Some(path) => {
                if path.exists() {
                    return Ok(());
                }
                let dir = path.parent().expect("blob path has a parent");
                std::fs::create_dir_all(dir)?;
                let tmp = dir.join(format!(".{}.{}", digest.hex(), uuid::Uuid::new_v4()));
                std::fs::write(&tmp, bytes)?;
                std::fs::rename(&tmp, &path)?;
            }
            None => {
                self.memory.write().entry(digest.clone()).or_insert_with(|| bytes.to_vec());
            }
        }
        Ok(())
    }

    pub fn get(&self, digest: &Digest) -> Result<Vec<u8>, RegistryError> {
        match self.path_for(digest) {
            Some(path) => std::fs::read(&path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => RegistryError::NotFound(format!("blob {digest}")),
                _ => e.into(),
            }),
            None => self
                .memory
                .read()
                .get(digest)
                .cloned()
                .ok_or_else(|| RegistryError::NotFound(format!("blob {digest}"))),
        }
    }

    /// Stores a record under its verified digest.
    pub fn put_record<T: ContentAddressed>(&self, record: &T) -> Result<Digest, RegistryError> {
        let digest = record.content_digest()?;
        if &digest != record.declared_digest() {
            return Err(RegistryError::Integrity(format!(
                "declared digest {} does not match content {digest}",
                record.declared_digest()
            )));
        }
        self.put(&digest, &canonical_encode(record)?)?;
        Ok(digest)
    }

    /// Reads a record and re-verifies its digest.
    pub fn get_record<T: ContentAddressed>(&self, digest: &Digest) -> Result<T, RegistryError> {
        let bytes = self.get(digest)?;
        let record: T = serde_json::from_slice(&bytes).map_err(|_| RegistryError::Corruption(digest.clone()))?;
        let recomputed = record.content_digest()?;
        if &recomputed != digest || record.declared_digest() != digest {
            return Err(RegistryError::Corruption(digest.clone()));
        }
        Ok(record)
    }
}

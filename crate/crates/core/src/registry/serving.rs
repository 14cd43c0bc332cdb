//! Serving handles: `inproc://sha256/<digest>` scores a stored linear
//! artifact in-process; `http://host:port[/prefix]` posts to a remote runner.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::blobs::BlobStore;
use super::types::ModelArtifact;
use crate::domain::Digest;
use crate::features::{FeatureVector, VectorEntry};

pub const DEFAULT_HTTP_TIMEOUT: Duration = Duration::from_secs(2);
const DEFAULT_RETRY_AFTER_SECS: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServingHandle {
    InProc { artifact_digest: Digest },
    Http { base_url: String },
}

#[derive(Debug, Error)]
pub enum ServingError {
    #[error("unsupported serving handle {0:?}")]
    BadHandle(String),
    #[error("model expects {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("feature vector is not numeric: {0}")]
    NonNumeric(String),
    #[error("serving backend {handle} unavailable: {reason}")]
    Unavailable { handle: String, reason: String, retry_after_secs: u64 },
    #[error("serving backend returned {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("artifact could not be loaded: {0}")]
    Artifact(String),
}

impl FromStr for ServingHandle {
    type Err = ServingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("inproc://") {
            let hex = rest.strip_prefix("sha256/").unwrap_or(rest);
            let artifact_digest = hex.parse().map_err(|_| ServingError::BadHandle(s.into()))?;
            return Ok(ServingHandle::InProc { artifact_digest });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(ServingHandle::Http { base_url: s.trim_end_matches('/').to_string() });
        }
        Err(ServingError::BadHandle(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub raw: f64,
    pub probability: f64,
}

/// Request body of the runner contract: `POST /score`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteScoreRequest {
    pub entries: Vec<VectorEntry>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scores a numeric input with a linear artifact.
pub fn score_linear(artifact: &ModelArtifact, x: &[f64]) -> Result<Score, ServingError> {
    if x.len() != artifact.coefficients.len() {
        return Err(ServingError::Dimension { expected: artifact.coefficients.len(), got: x.len() });
    }
    let raw = artifact.intercept + artifact.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    let probability = match artifact.calibration {
        Some(p) => sigmoid(p.a * raw + p.b),
        None => sigmoid(raw),
    };
    Ok(Score { raw, probability })
}

fn http_client() -> &'static reqwest::blocking::Client {
    static CLIENT: OnceLock<reqwest::blocking::Client> = OnceLock::new();
    CLIENT.get_or_init(|| {
        reqwest::blocking::Client::builder()
            .timeout(DEFAULT_HTTP_TIMEOUT)
            .build()
            .expect("http client builds")
    })
}

/// Resolves serving handles and scores vectors. Loaded artifacts are cached
/// by digest. HTTP calls block; call from a blocking context.
#[derive(Debug)]
pub struct Scorer {
    blobs: Arc<BlobStore>,
    cache: RwLock<HashMap<Digest, Arc<ModelArtifact>>>,
    timeout: Duration,
}

impl Scorer {
    pub fn new(blobs: Arc<BlobStore>) -> Self {
        Scorer { blobs, cache: RwLock::default(), timeout: DEFAULT_HTTP_TIMEOUT }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn artifact(&self, digest: &Digest) -> Result<Arc<ModelArtifact>, ServingError> {
        if let Some(a) = self.cache.read().get(digest) {
            return Ok(a.clone());
        }
        let artifact: ModelArtifact = self.blobs.get_record(digest).map_err(|e| ServingError::Artifact(e.to_string()))?;
        let artifact = Arc::new(artifact);
        self.cache.write().insert(digest.clone(), artifact.clone());
        Ok(artifact)
    }

    pub fn score(&self, handle: &str, vector: &FeatureVector) -> Result<Score, ServingError> {
        match handle.parse()? {
            ServingHandle::InProc { artifact_digest } => {
                let artifact = self.artifact(&artifact_digest)?;
                let x = vector.numeric_values().map_err(|e| ServingError::NonNumeric(e.to_string()))?;
                score_linear(&artifact, &x)
            }
            ServingHandle::Http { base_url } => self.score_remote(handle, &base_url, &vector.entries),
        }
    }

    fn score_remote(&self, handle: &str, base_url: &str, entries: &[VectorEntry]) -> Result<Score, ServingError> {
        let unavailable = |reason: String, retry_after_secs: u64| ServingError::Unavailable {
            handle: handle.to_string(),
            reason,
            retry_after_secs,
        };
        let resp = http_client()
            .post(format!("{base_url}/score"))
            .timeout(self.timeout)
            .json(&RemoteScoreRequest { entries: entries.to_vec() })
            .send()
            .map_err(|e| unavailable(e.to_string(), DEFAULT_RETRY_AFTER_SECS))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json::<Score>().map_err(|e| unavailable(format!("malformed response: {e}"), DEFAULT_RETRY_AFTER_SECS));
        }
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        let body = resp.text().unwrap_or_default();
        match status.as_u16() {
            422 => {
                #[derive(Deserialize)]
                struct Dim {
                    expected: usize,
                    got: usize,
                }
                match serde_json::from_str::<Dim>(&body) {
                    Ok(d) => Err(ServingError::Dimension { expected: d.expected, got: d.got }),
                    Err(_) => Err(ServingError::Remote { status: 422, body }),
                }
            }
            s if s >= 500 => Err(unavailable(format!("status {s}: {body}"), retry_after.unwrap_or(DEFAULT_RETRY_AFTER_SECS))),
            s => Err(ServingError::Remote { status: s, body }),
        }
    }
}

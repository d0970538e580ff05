//! Persistent response cache: one JSON file per request hash.
//!
//! Writes go through a temp file + rename so concurrent writers never
//! expose a torn entry. A corrupt entry surfaces as an integrity error
//! naming the offending file; callers regenerate instead of reusing it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GenerationSample, ModelInput};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache entry {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedRequest {
    pub provider: String,
    pub input: ModelInput,
    pub ordinal: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedEntry {
    pub request: CachedRequest,
    pub response: GenerationSample,
    /// Seconds since the Unix epoch at store time.
    pub timestamp: u64,
}

/// Directory-backed cache keyed by [`super::request_hash`].
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    /// Opens (creating if needed) a cache directory. Honors the
    /// `SPUQ_CACHE_DIR` environment variable via [`ResponseCache::from_env`].
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| CacheError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    /// Cache at `$SPUQ_CACHE_DIR`, or `None` when the variable is unset.
    pub fn from_env() -> Result<Option<Self>, CacheError> {
        match std::env::var_os("SPUQ_CACHE_DIR") {
            Some(dir) if !dir.is_empty() => Ok(Some(Self::open(PathBuf::from(dir))?)),
            _ => Ok(None),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, request_hash: &str) -> PathBuf {
        self.dir.join(format!("{request_hash}.json"))
    }

    /// Returns the stored sample for `request_hash`, `None` on a miss.
    pub fn lookup(&self, request_hash: &str) -> Result<Option<GenerationSample>, CacheError> {
        Ok(self.lookup_entry(request_hash)?.map(|e| e.response))
    }

    pub fn lookup_entry(&self, request_hash: &str) -> Result<Option<CachedEntry>, CacheError> {
        let path = self.entry_path(request_hash);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let entry: CachedEntry =
            serde_json::from_slice(&bytes).map_err(|e| CacheError::Corrupt {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        entry.response.validate().map_err(|e| CacheError::Corrupt {
            path,
            reason: e.to_string(),
        })?;
        Ok(Some(entry))
    }

    /// Stores an entry atomically (temp file + rename).
    pub fn store(
        &self,
        request_hash: &str,
        request: CachedRequest,
        response: &GenerationSample,
    ) -> Result<(), CacheError> {
        let entry = CachedEntry {
            request,
            response: response.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.entry_path(request_hash);
        let body = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.dir).map_err(|source| CacheError::Io {
                path: self.dir.clone(),
                source,
            })?;
        tmp.write_all(&body).map_err(|source| CacheError::Io {
            path: path.clone(),
            source,
        })?;
        tmp.persist(&path).map_err(|e| CacheError::Io {
            path: path.clone(),
            source: e.error,
        })?;
        Ok(())
    }
}

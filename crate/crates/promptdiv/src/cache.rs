//! Content-addressed disk cache for endpoint responses.
//!
//! Keys are SHA-256 hex digests computed by the clients from everything
//! that determines a response's identity (run id, prompt id, sample
//! index; or model + text hash). Values are opaque bytes — each client
//! stores its own serialized record, so a cache hit reproduces the
//! original byte-for-byte and a rerun touching only cached work issues
//! zero endpoint requests.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::corpus::{canonical_json, content_hash};
use crate::error::{Error, Result};

/// Cache key for one generated sample within a run.
pub fn generation_cache_key(run_id: &str, prompt_id: &str, sample_index: u32) -> String {
    let payload = canonical_json(&serde_json::json!(["generation", run_id, prompt_id, sample_index]))
        .expect("cache key serialization");
    content_hash(payload.as_bytes())
}

/// Cache key for one embedding.
pub fn embedding_cache_key(model: &str, text_hash: &str) -> String {
    let payload = canonical_json(&serde_json::json!(["embedding", model, text_hash]))
        .expect("cache key serialization");
    content_hash(payload.as_bytes())
}

/// A directory of immutable cache entries, sharded by key prefix.
#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
    tmp_counter: AtomicU64,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Result<DiskCache> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(DiskCache {
            root,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &str) -> Result<PathBuf> {
        if key.len() < 3 || !key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::invalid(format!("malformed cache key {key:?}")));
        }
        Ok(self.root.join(&key[..2]).join(key))
    }

    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>> {
        let path = self.entry_path(key)?;
        match std::fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// Stores `bytes` under `key` atomically (write-to-temp, then rename)
    /// so concurrent writers and crashes never leave torn entries.
    pub fn put(&self, key: &str, bytes: &[u8]) -> Result<()> {
        let path = self.entry_path(key)?;
        let shard = path.parent().expect("entry path has a shard directory");
        std::fs::create_dir_all(shard).map_err(|e| Error::io(shard, e))?;
        let tmp = shard.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

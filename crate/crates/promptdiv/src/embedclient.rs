//! Sentence embeddings for responses, from an OpenAI-compatible
//! `/v1/embeddings` endpoint or a precomputed JSONL file.
//!
//! Vectors are stored exactly as produced (no client-side normalization;
//! cosine handles scaling) and are keyed by the SHA-256 hash of the exact
//! text bytes, which is also the join key from generations to embeddings
//! and the cache identity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::cache::{embedding_cache_key, DiskCache};
use crate::corpus::{self, content_hash};
use crate::error::{Error, Result};
use crate::net::{parallel_map, HttpClient};

/// Default embedding model name.
pub const DEFAULT_EMBEDDING_MODEL: &str = "all-MiniLM-L6-v2";

/// One sentence embedding, tied to the text it came from by hash.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_text_hash: String,
}

impl EmbeddingVector {
    /// Builds a vector, rejecting empty, non-finite, or zero-norm values.
    pub fn new(values: Vec<f64>, source_text_hash: String) -> Result<EmbeddingVector> {
        if values.is_empty() {
            return Err(Error::invalid(format!(
                "embedding for text hash {source_text_hash} is empty"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "embedding for text hash {source_text_hash} has non-finite values"
            )));
        }
        let vector = EmbeddingVector {
            values,
            source_text_hash,
        };
        if vector.norm() == 0.0 {
            return Err(Error::invalid(format!(
                "zero-norm embedding for text hash {}",
                vector.source_text_hash
            )));
        }
        Ok(vector)
    }

    /// A test convenience: hash is derived from the values themselves.
    pub fn from_values(values: Vec<f64>) -> Result<EmbeddingVector> {
        let hash = content_hash(format!("{values:?}").as_bytes());
        EmbeddingVector::new(values, hash)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The JSONL row format for embedding files.
#[derive(Debug, Clone, serde::Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub text_hash: String,
    pub values: Vec<f64>,
}

/// An immutable, dimension-checked set of embeddings keyed by text hash.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    by_hash: BTreeMap<String, EmbeddingVector>,
    dim: Option<usize>,
}

impl EmbeddingSet {
    pub fn new() -> EmbeddingSet {
        EmbeddingSet::default()
    }

    pub fn insert(&mut self, vector: EmbeddingVector) -> Result<()> {
        match self.dim {
            None => self.dim = Some(vector.dim()),
            Some(dim) if dim != vector.dim() => {
                return Err(Error::invalid(format!(
                    "embedding dimension mismatch: set has dim {dim}, vector {} has dim {}",
                    vector.source_text_hash,
                    vector.dim()
                )));
            }
            Some(_) => {}
        }
        if self.by_hash.contains_key(&vector.source_text_hash) {
            return Err(Error::invalid(format!(
                "duplicate embedding for text hash {}",
                vector.source_text_hash
            )));
        }
        self.by_hash.insert(vector.source_text_hash.clone(), vector);
        Ok(())
    }

    pub fn get(&self, text_hash: &str) -> Option<&EmbeddingVector> {
        self.by_hash.get(text_hash)
    }

    /// Looks up the vector for exact text bytes; errors when missing.
    pub fn vector_for_text(&self, text: &str) -> Result<&EmbeddingVector> {
        let hash = content_hash(text.as_bytes());
        self.by_hash.get(&hash).ok_or_else(|| {
            Error::invalid(format!(
                "missing embedding for text hash {hash} (text starts {:?})",
                text.chars().take(30).collect::<String>()
            ))
        })
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn vectors(&self) -> impl Iterator<Item = &EmbeddingVector> {
        self.by_hash.values()
    }
}

/// Parses an embeddings JSONL file into a dimension-checked set.
pub fn parse_embeddings(bytes: &[u8], origin: &str) -> Result<EmbeddingSet> {
    let rows: Vec<(u64, EmbeddingRow)> = corpus::parse_jsonl(bytes, origin)?;
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: origin.to_string(),
        });
    }
    let mut set = EmbeddingSet::new();
    for (line, row) in rows {
        let vector = EmbeddingVector::new(row.values, row.text_hash).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line,
            msg: e.to_string(),
        })?;
        set.insert(vector).map_err(|e| match e {
            Error::Invalid(msg) if msg.contains("duplicate") => Error::DuplicateId {
                path: origin.to_string(),
                line,
                id: msg,
            },
            other => Error::Parse {
                path: origin.to_string(),
                line,
                msg: other.to_string(),
            },
        })?;
    }
    Ok(set)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&bytes, &path.display().to_string())
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let rows: Vec<EmbeddingRow> = set
        .vectors()
        .map(|v| EmbeddingRow {
            text_hash: v.source_text_hash.clone(),
            values: v.values.clone(),
        })
        .collect();
    let mut buf = Vec::new();
    corpus::write_jsonl(&rows, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Endpoint configuration for an [`EmbedClient`].
#[derive(Debug, Clone)]
pub struct EmbedClientConfig {
    pub endpoint_url: String,
    pub model: String,
    /// Texts per request.
    pub batch_size: usize,
}

impl EmbedClientConfig {
    pub fn new(endpoint_url: &str) -> EmbedClientConfig {
        EmbedClientConfig {
            endpoint_url: endpoint_url.to_string(),
            model: DEFAULT_EMBEDDING_MODEL.to_string(),
            batch_size: 32,
        }
    }
}

/// An embeddings endpoint client.
pub struct EmbedClient {
    http: HttpClient,
    config: EmbedClientConfig,
    embeddings_url: String,
}

#[derive(Deserialize)]
struct ApiEmbeddingResponse {
    data: Vec<ApiEmbeddingDatum>,
}

#[derive(Deserialize)]
struct ApiEmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<u32>,
}

/// Decodes a raw `/v1/embeddings` response into per-input vectors in
/// request order (fuzzable entry point).
pub fn parse_embedding_response(bytes: &[u8], origin: &str) -> Result<Vec<Vec<f64>>> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Response {
        url: origin.to_string(),
        msg: format!("response is not valid JSON: {e}"),
    })?;
    embedding_values_from_value(&value, origin)
}

/// Same as [`parse_embedding_response`] over an already-parsed value.
pub fn embedding_values_from_value(
    value: &serde_json::Value,
    origin: &str,
) -> Result<Vec<Vec<f64>>> {
    let response: ApiEmbeddingResponse =
        serde_json::from_value(value.clone()).map_err(|e| Error::Response {
            url: origin.to_string(),
            msg: format!("embedding response schema: {e}"),
        })?;
    let mut data = response.data;
    if data.iter().all(|d| d.index.is_some()) {
        data.sort_by_key(|d| d.index.unwrap());
    }
    Ok(data.into_iter().map(|d| d.embedding).collect())
}

impl EmbedClient {
    pub fn new(config: EmbedClientConfig, http: HttpClient) -> Result<EmbedClient> {
        if config.endpoint_url.trim().is_empty() {
            return Err(Error::invalid("embedding endpoint_url is empty"));
        }
        if config.model.trim().is_empty() {
            return Err(Error::invalid("embedding model is empty"));
        }
        if config.batch_size == 0 {
            return Err(Error::invalid("embed_batch_size must be >= 1"));
        }
        let base = config.endpoint_url.trim_end_matches('/').to_string();
        Ok(EmbedClient {
            embeddings_url: format!("{base}/v1/embeddings"),
            http,
            config,
        })
    }

    pub fn telemetry(&self) -> std::sync::Arc<crate::net::Telemetry> {
        self.http.telemetry()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let body = serde_json::json!({
            "model": self.config.model,
            "input": texts,
        });
        let response = self.http.post_json(&self.embeddings_url, &body)?;
        let values = embedding_values_from_value(&response, &self.embeddings_url)?;
        if values.len() != texts.len() {
            return Err(Error::Response {
                url: self.embeddings_url.clone(),
                msg: format!("sent {} inputs but got {} embeddings", texts.len(), values.len()),
            });
        }
        texts
            .iter()
            .zip(values)
            .map(|(text, vals)| {
                EmbeddingVector::new(vals, content_hash(text.as_bytes())).map_err(|e| {
                    Error::Response {
                        url: self.embeddings_url.clone(),
                        msg: e.to_string(),
                    }
                })
            })
            .collect()
    }

    /// Embeds every text, preserving input order. Duplicate texts are
    /// requested once; with a cache, previously embedded texts are
    /// replayed without a request. Batches run with at most
    /// `parallelism` requests in flight.
    pub fn embed(
        &self,
        texts: &[String],
        parallelism: usize,
        cache: Option<&DiskCache>,
    ) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::invalid("embed needs at least one text"));
        }
        // Deduplicate by hash; the response is then fanned back out.
        let hashes: Vec<String> = texts.iter().map(|t| content_hash(t.as_bytes())).collect();
        let mut resolved: BTreeMap<String, EmbeddingVector> = BTreeMap::new();
        let mut pending: Vec<&str> = Vec::new();
        let mut pending_hashes: std::collections::BTreeSet<String> = Default::default();
        for (text, hash) in texts.iter().zip(&hashes) {
            if resolved.contains_key(hash) || pending_hashes.contains(hash) {
                continue;
            }
            if let Some(disk) = cache {
                let key = embedding_cache_key(&self.config.model, hash);
                if let Some(bytes) = disk.get(&key)? {
                    if let Ok(row) = serde_json::from_slice::<EmbeddingRow>(&bytes) {
                        if let Ok(vector) = EmbeddingVector::new(row.values, row.text_hash) {
                            self.http.telemetry().record_cache_hit();
                            resolved.insert(hash.clone(), vector);
                            continue;
                        }
                    }
                    // Corrupt entry: fall through and refetch.
                }
            }
            pending.push(text.as_str());
            pending_hashes.insert(hash.clone());
        }

        let batches: Vec<&[&str]> = pending.chunks(self.config.batch_size).collect();
        let results = parallel_map(&batches, parallelism.max(1), |batch| self.embed_batch(batch));
        for result in results {
            for vector in result? {
                if let Some(disk) = cache {
                    let key = embedding_cache_key(&self.config.model, &vector.source_text_hash);
                    let row = EmbeddingRow {
                        text_hash: vector.source_text_hash.clone(),
                        values: vector.values.clone(),
                    };
                    let bytes = serde_json::to_vec(&row)
                        .map_err(|e| Error::invalid(format!("serializing embedding: {e}")))?;
                    disk.put(&key, &bytes)?;
                }
                resolved.insert(vector.source_text_hash.clone(), vector);
            }
        }

        // Fan back out to input order; dimensional consistency is checked
        // across the whole response set.
        let mut out = Vec::with_capacity(texts.len());
        let mut dim: Option<usize> = None;
        for hash in &hashes {
            let vector = resolved.get(hash).ok_or_else(|| Error::Response {
                url: self.embeddings_url.clone(),
                msg: format!("endpoint returned no embedding for text hash {hash}"),
            })?;
            match dim {
                None => dim = Some(vector.dim()),
                Some(d) if d != vector.dim() => {
                    return Err(Error::Response {
                        url: self.embeddings_url.clone(),
                        msg: format!(
                            "embedding dimension mismatch across batches: {d} vs {}",
                            vector.dim()
                        ),
                    });
                }
                Some(_) => {}
            }
            out.push(vector.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_invariants() {
        assert!(EmbeddingVector::from_values(vec![]).is_err());
        assert!(EmbeddingVector::from_values(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::from_values(vec![f64::NAN]).is_err());
        let v = EmbeddingVector::from_values(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.dim(), 2);
        assert!((v.norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn set_enforces_uniform_dim_and_unique_hash() {
        let mut set = EmbeddingSet::new();
        set.insert(EmbeddingVector::new(vec![1.0, 0.0], "aa".into()).unwrap()).unwrap();
        assert_eq!(set.dim(), Some(2));
        let err = set
            .insert(EmbeddingVector::new(vec![1.0, 0.0, 0.0], "bb".into()).unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"));
        let err = set
            .insert(EmbeddingVector::new(vec![0.0, 1.0], "aa".into()).unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn jsonl_round_trip_and_line_errors() {
        let good = br#"{"text_hash": "aa", "values": [1.0, 2.0]}
{"text_hash": "bb", "values": [3.0, 4.0]}
"#;
        let set = parse_embeddings(good, "mem").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dim(), Some(2));

        let dim_mismatch = br#"{"text_hash": "aa", "values": [1.0, 2.0]}
{"text_hash": "bb", "values": [3.0, 4.0, 5.0]}
"#;
        let err = parse_embeddings(dim_mismatch, "mem").unwrap_err();
        assert!(err.to_string().contains("mem:2"), "{err}");

        let duplicate = br#"{"text_hash": "aa", "values": [1.0, 2.0]}
{"text_hash": "aa", "values": [1.0, 2.0]}
"#;
        let err = parse_embeddings(duplicate, "mem").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        assert!(parse_embeddings(b"", "mem").is_err());
    }

    #[test]
    fn write_then_load_preserves_values_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.jsonl");
        let mut set = EmbeddingSet::new();
        set.insert(EmbeddingVector::new(vec![0.12345678901234567, -1.5], "aa".into()).unwrap())
            .unwrap();
        write_embeddings(&set, &path).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        assert_eq!(loaded, set);
    }

    #[test]
    fn vector_for_text_joins_by_content_hash() {
        let text = "some generated response";
        let hash = content_hash(text.as_bytes());
        let mut set = EmbeddingSet::new();
        set.insert(EmbeddingVector::new(vec![1.0], hash).unwrap()).unwrap();
        assert!(set.vector_for_text(text).is_ok());
        let err = set.vector_for_text("different text").unwrap_err();
        assert!(err.to_string().contains("missing embedding"));
    }

    #[test]
    fn response_parsing_restores_index_order() {
        let body = br#"{"object": "list", "data": [
            {"object": "embedding", "embedding": [2.0], "index": 1},
            {"object": "embedding", "embedding": [1.0], "index": 0}
        ], "model": "m"}"#;
        let values = parse_embedding_response(body, "test").unwrap();
        assert_eq!(values, vec![vec![1.0], vec![2.0]]);
        assert!(parse_embedding_response(b"{}", "test").is_err());
        assert!(parse_embedding_response(b"nope", "test").is_err());
    }

    #[test]
    fn client_config_is_validated() {
        let http = HttpClient::for_tests();
        assert!(EmbedClient::new(EmbedClientConfig::new(""), http.clone()).is_err());
        let mut config = EmbedClientConfig::new("http://x");
        config.batch_size = 0;
        assert!(EmbedClient::new(config, http.clone()).is_err());
        let mut config = EmbedClientConfig::new("http://x");
        config.model = " ".to_string();
        assert!(EmbedClient::new(config, http).is_err());
    }
}

//! Topic-label assignment for generated responses.
//!
//! Two methods produce [`LabelRecord`]s:
//!
//! - [`extract_labels_llm`]: asks a chat-capable endpoint to name each
//!   response's topic (the primary method); per-item failures are
//!   collected, not fatal.
//! - [`classify_keyword`]: a deterministic offline fallback driven by an
//!   ordered keyword [`Taxonomy`]; first matching label wins, with the
//!   reserved label `"other"` when nothing matches.
//!
//! [`label_distribution`] turns records into the empirical distribution
//! that topic diversity is computed from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cache::DiskCache;
use crate::corpus::{self, content_hash, GenerationRecord};
use crate::error::{Error, ItemFailure, PartialFailure, Result};
use crate::genclient::parse_chat_response;
use crate::metrics::textstats::tokenize;
use crate::net::{parallel_map, HttpClient};

/// Marker in an extraction instruction replaced by the response text.
pub const TEXT_MARKER: &str = "{text}";

/// Default instruction sent to the labeling endpoint.
pub const DEFAULT_EXTRACTION_INSTRUCTION: &str =
    "Read the following text and reply with a single word naming its main topic category. Text: {text}";

/// Fallback label when no taxonomy keyword matches.
pub const RESERVED_LABEL_OTHER: &str = "other";

/// How a label was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMethod {
    Llm,
    Keyword,
}

impl fmt::Display for LabelMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMethod::Llm => "llm",
            LabelMethod::Keyword => "keyword",
        })
    }
}

impl std::str::FromStr for LabelMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<LabelMethod> {
        match s {
            "llm" => Ok(LabelMethod::Llm),
            "keyword" => Ok(LabelMethod::Keyword),
            other => Err(Error::invalid(format!(
                "unknown label method {other:?} (expected llm or keyword)"
            ))),
        }
    }
}

/// One topic label for one generated response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub prompt_id: String,
    pub sample_index: u32,
    /// Normalized (case-folded, trimmed, single-spaced), non-empty.
    pub label: String,
    pub method: LabelMethod,
}

impl LabelRecord {
    fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::invalid(format!(
                "label record (prompt {:?}, sample {}) has an empty label",
                self.prompt_id, self.sample_index
            )));
        }
        if self.label != normalize_label(&self.label) {
            return Err(Error::invalid(format!(
                "label {:?} (prompt {:?}, sample {}) is not normalized",
                self.label, self.prompt_id, self.sample_index
            )));
        }
        Ok(())
    }
}

/// Case-folds, trims, and collapses internal whitespace runs to single
/// spaces. Idempotent; no stemming.
pub fn normalize_label(raw: &str) -> String {
    raw.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// An ordered list of `(label, keywords)` entries; order is the
/// tie-break — the first label with a matching keyword wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TaxonomyEntry {
    label: String,
    /// Keywords pre-tokenized for word-level matching.
    keywords: Vec<Vec<String>>,
}

/// The on-disk taxonomy row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub label: String,
    pub keywords: Vec<String>,
}

impl Taxonomy {
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Result<Taxonomy> {
        if entries.is_empty() {
            return Err(Error::invalid("taxonomy has no entries"));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut built = Vec::with_capacity(entries.len());
        for (raw_label, raw_keywords) in entries {
            let label = normalize_label(&raw_label);
            if label.is_empty() {
                return Err(Error::invalid("taxonomy entry has an empty label"));
            }
            if label == RESERVED_LABEL_OTHER {
                return Err(Error::invalid(format!(
                    "taxonomy label {RESERVED_LABEL_OTHER:?} is reserved for the fallback"
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::invalid(format!("duplicate taxonomy label {label:?}")));
            }
            if raw_keywords.is_empty() {
                return Err(Error::invalid(format!(
                    "taxonomy label {label:?} has an empty keyword list"
                )));
            }
            let mut keywords = Vec::with_capacity(raw_keywords.len());
            for raw in &raw_keywords {
                let tokens = tokenize(raw);
                if tokens.is_empty() {
                    return Err(Error::invalid(format!(
                        "taxonomy label {label:?} has keyword {raw:?} with no word tokens"
                    )));
                }
                keywords.push(tokens);
            }
            built.push(TaxonomyEntry { label, keywords });
        }
        Ok(Taxonomy { entries: built })
    }

    /// The built-in news-topic taxonomy for desk-scale runs.
    pub fn default_news() -> Taxonomy {
        let entries = [
            (
                "science",
                vec![
                    "science", "scientists", "research", "researchers", "study",
                    "discovery", "space", "nasa", "physics", "climate", "experiment",
                ],
            ),
            (
                "sports",
                vec![
                    "sports", "game", "team", "player", "players", "season", "championship",
                    "league", "coach", "tournament", "quarterback", "stadium",
                ],
            ),
            (
                "health",
                vec![
                    "health", "hospital", "doctors", "vaccine", "disease", "medical",
                    "patients", "virus", "treatment", "drug", "wellness",
                ],
            ),
            (
                "politics",
                vec![
                    "politics", "election", "government", "president", "senate", "congress",
                    "minister", "policy", "vote", "campaign", "parliament",
                ],
            ),
            (
                "business",
                vec![
                    "business", "market", "economy", "company", "stocks", "trade", "profits",
                    "investors", "startup", "earnings", "bank",
                ],
            ),
            (
                "entertainment",
                vec![
                    "entertainment", "film", "movie", "music", "celebrity", "album",
                    "concert", "festival", "actor", "actress", "television",
                ],
            ),
            (
                "technology",
                vec![
                    "technology", "tech", "software", "smartphone", "internet", "computer",
                    "app", "robot", "artificial intelligence", "chip",
                ],
            ),
        ];
        Taxonomy::new(
            entries
                .into_iter()
                .map(|(label, kws)| {
                    (
                        label.to_string(),
                        kws.into_iter().map(|k| k.to_string()).collect(),
                    )
                })
                .collect(),
        )
        .expect("built-in taxonomy is valid")
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses a JSONL taxonomy (`{"label", "keywords"}` per line, order
/// significant).
pub fn parse_taxonomy(bytes: &[u8], origin: &str) -> Result<Taxonomy> {
    let rows: Vec<(u64, TaxonomyRow)> = corpus::parse_jsonl(bytes, origin)?;
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: origin.to_string(),
        });
    }
    Taxonomy::new(rows.into_iter().map(|(_, r)| (r.label, r.keywords)).collect())
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_taxonomy(&bytes, &path.display().to_string())
}

/// Returns the first taxonomy label with a keyword occurring in `text` as
/// a case-insensitive word match (multi-word keywords must appear as a
/// consecutive token run); `"other"` when none match.
pub fn classify_keyword(text: &str, taxonomy: &Taxonomy) -> String {
    let tokens = tokenize(text);
    for entry in &taxonomy.entries {
        for keyword in &entry.keywords {
            let matched = if keyword.len() == 1 {
                tokens.iter().any(|t| t == &keyword[0])
            } else {
                tokens.len() >= keyword.len()
                    && tokens.windows(keyword.len()).any(|w| w == keyword.as_slice())
            };
            if matched {
                return entry.label.clone();
            }
        }
    }
    RESERVED_LABEL_OTHER.to_string()
}

/// Labels every generation with the keyword classifier (method=keyword).
pub fn classify_keyword_batch(
    generations: &[GenerationRecord],
    taxonomy: &Taxonomy,
) -> Vec<LabelRecord> {
    generations
        .iter()
        .map(|g| LabelRecord {
            prompt_id: g.prompt_id.clone(),
            sample_index: g.sample_index,
            label: classify_keyword(&g.text, taxonomy),
            method: LabelMethod::Keyword,
        })
        .collect()
}

/// The empirical distribution over observed labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDistribution {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl LabelDistribution {
    pub fn from_counts<I>(counts: I) -> Result<LabelDistribution>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut map = BTreeMap::new();
        let mut total = 0u64;
        for (label, count) in counts {
            if count == 0 {
                return Err(Error::invalid(format!(
                    "label distribution stores only observed labels; {label:?} has count 0"
                )));
            }
            let normalized = normalize_label(&label);
            if normalized.is_empty() {
                return Err(Error::invalid("label distribution has an empty label"));
            }
            *map.entry(normalized).or_insert(0) += count;
            total += count;
        }
        if total == 0 {
            return Err(Error::invalid("label distribution is empty"));
        }
        Ok(LabelDistribution { counts: map, total })
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct labels observed.
    pub fn support(&self) -> usize {
        self.counts.len()
    }
}

/// Counts labels into a distribution. Errors on empty input.
pub fn label_distribution(labels: &[LabelRecord]) -> Result<LabelDistribution> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot build a label distribution from zero labels"));
    }
    LabelDistribution::from_counts(labels.iter().map(|l| (l.label.clone(), 1)))
}

/// Reads label records from JSONL, validating each.
pub fn parse_labels(bytes: &[u8], origin: &str) -> Result<Vec<LabelRecord>> {
    let rows: Vec<(u64, LabelRecord)> = corpus::parse_jsonl(bytes, origin)?;
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: origin.to_string(),
        });
    }
    let mut labels = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        record.validate().map_err(|e| Error::Parse {
            path: origin.to_string(),
            line,
            msg: e.to_string(),
        })?;
        labels.push(record);
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes, &path.display().to_string())
}

pub fn write_labels(labels: &[LabelRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    corpus::write_jsonl(labels, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// A chat-endpoint topic extractor.
pub struct LlmLabeler {
    http: HttpClient,
    chat_url: String,
    model: String,
    instruction: String,
}

impl LlmLabeler {
    /// `endpoint_url` is the service base (e.g. `http://host:port`); the
    /// instruction must contain `{text}`.
    pub fn new(
        http: HttpClient,
        endpoint_url: &str,
        model: &str,
        instruction: &str,
    ) -> Result<LlmLabeler> {
        if !instruction.contains(TEXT_MARKER) {
            return Err(Error::invalid(format!(
                "extraction instruction must contain the {TEXT_MARKER} marker"
            )));
        }
        Ok(LlmLabeler {
            http,
            chat_url: format!("{}/v1/chat/completions", endpoint_url.trim_end_matches('/')),
            model: model.to_string(),
            instruction: instruction.to_string(),
        })
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    fn cache_key(&self, text: &str) -> String {
        let payload = corpus::canonical_json(&serde_json::json!([
            "label",
            self.model,
            self.instruction,
            text,
        ]))
        .expect("cache key serialization");
        content_hash(payload.as_bytes())
    }

    /// Extracts one normalized label; errors on transport failure or an
    /// empty extraction (no silent default).
    pub fn telemetry(&self) -> std::sync::Arc<crate::net::Telemetry> {
        self.http.telemetry()
    }

    pub fn extract_one(&self, text: &str, cache: Option<&DiskCache>) -> Result<String> {
        let key = self.cache_key(text);
        if let Some(cache) = cache {
            if let Some(bytes) = cache.get(&key)? {
                self.http.telemetry().record_cache_hit();
                return String::from_utf8(bytes)
                    .map_err(|_| Error::invalid("cached label is not UTF-8"));
            }
        }
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": self.instruction.replace(TEXT_MARKER, text),
            }],
            "temperature": 0.0,
            "max_tokens": 16,
        });
        let response = self.http.post_json(&self.chat_url, &body)?;
        let content = parse_chat_response(&response, &self.chat_url)?;
        let first_line = content.lines().next().unwrap_or("");
        let label = normalize_label(first_line);
        if label.is_empty() {
            return Err(Error::Response {
                url: self.chat_url.clone(),
                msg: "extractor returned an empty label".to_string(),
            });
        }
        if let Some(cache) = cache {
            cache.put(&key, label.as_bytes())?;
        }
        Ok(label)
    }
}

/// Labels from an LLM extraction pass plus any per-item failures.
#[derive(Debug)]
pub struct LabelingOutcome {
    pub labels: Vec<LabelRecord>,
    pub failures: Vec<ItemFailure>,
    /// Total generations attempted.
    pub attempted: usize,
}

impl LabelingOutcome {
    /// The failure summary when any item failed.
    pub fn partial_failure(&self) -> Option<PartialFailure> {
        if self.failures.is_empty() {
            None
        } else {
            Some(PartialFailure {
                completed: self.labels.len(),
                total: self.attempted,
                failures: self.failures.clone(),
            })
        }
    }

    /// Converts failures (if any) into [`Error::Partial`].
    pub fn into_result(self) -> Result<Vec<LabelRecord>> {
        if self.failures.is_empty() {
            Ok(self.labels)
        } else {
            Err(Error::Partial(PartialFailure {
                completed: self.labels.len(),
                total: self.attempted,
                failures: self.failures,
            }))
        }
    }
}

/// Extracts a topic label for every generation via the chat endpoint,
/// running up to `parallelism` requests at once. Output order matches the
/// input; failed items are reported in the outcome, not silently dropped.
pub fn extract_labels_llm(
    labeler: &LlmLabeler,
    generations: &[GenerationRecord],
    parallelism: usize,
    cache: Option<&DiskCache>,
) -> LabelingOutcome {
    let results = parallel_map(generations, parallelism, |record| {
        labeler.extract_one(&record.text, cache)
    });
    let mut labels = Vec::with_capacity(generations.len());
    let mut failures = Vec::new();
    for (record, result) in generations.iter().zip(results) {
        match result {
            Ok(label) => labels.push(LabelRecord {
                prompt_id: record.prompt_id.clone(),
                sample_index: record.sample_index,
                label,
                method: LabelMethod::Llm,
            }),
            Err(e) => failures.push(ItemFailure {
                item: format!("{}#{}", record.prompt_id, record.sample_index),
                message: e.to_string(),
            }),
        }
    }
    LabelingOutcome {
        labels,
        failures,
        attempted: generations.len(),
    }
}

//! The diversity metric battery.
//!
//! Every metric here consumes plain data (texts, vectors, labels, or
//! per-step logprobs) and is deterministic: no I/O, no randomness. The
//! submodules:
//!
//! - [`textstats`]: shared tokenizer, sentence counting, content-word ratio
//! - [`semantic`]: mean pairwise cosine distance over embeddings
//! - [`topic`]: normalized entropy of a topic-label distribution
//! - [`structural`]: per-prompt spread of surface statistics
//! - [`lexical`]: distinct-n and self-BLEU
//! - [`entropy`]: truncated per-step decoding entropy
//!
//! [`collapse_verdict`] turns a (baseline, comparison) diversity pair into
//! the collapse decision used by reports.

pub mod entropy;
pub mod lexical;
pub mod semantic;
pub mod structural;
pub mod textstats;
pub mod topic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::GenerationRecord;
use crate::error::{Error, Result};

pub use entropy::{entropy_trajectory, step_entropy, EntropyTrajectory};
pub use lexical::{distinct_n, lexical_diversity, self_bleu, LexicalDiversity};
pub use semantic::{cosine_distance, semantic_diversity, SemanticDiversityScore};
pub use structural::{structural_diversity, StructuralDiversity};
pub use textstats::{content_word_ratio, sentence_count, tokenize, StopwordSet};
pub use topic::{topic_diversity, TopicDiversityScore};

/// Relative-gap threshold above which a diversity drop counts as collapse.
pub const DEFAULT_TAU: f64 = 0.2;

/// Metric names as they appear in score cells, reports, and CSV rows.
pub mod names {
    pub const SEMANTIC_DIVERSITY: &str = "semantic_diversity";
    pub const TOPIC_DIVERSITY: &str = "topic_diversity";
    pub const STD_TOKEN_COUNT: &str = "std_token_count";
    pub const STD_SENTENCE_COUNT: &str = "std_sentence_count";
    pub const STD_CONTENT_WORD_RATIO: &str = "std_content_word_ratio";
    pub const SELF_BLEU: &str = "self_bleu";
    pub const MEAN_STEP_ENTROPY: &str = "mean_step_entropy";

    /// `distinct_2` .. `distinct_5`.
    pub fn distinct(n: usize) -> String {
        format!("distinct_{n}")
    }
}

/// All sampled responses to a single prompt, ordered by sample index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseGroup {
    pub prompt_id: String,
    pub texts: Vec<String>,
}

/// Groups generation records by prompt, preserving first-seen prompt order
/// and ordering responses by `sample_index` within each group.
pub fn group_responses(records: &[GenerationRecord]) -> Vec<ResponseGroup> {
    let mut order: Vec<String> = Vec::new();
    let mut by_prompt: BTreeMap<String, Vec<(u32, &str)>> = BTreeMap::new();
    for record in records {
        let entry = by_prompt.entry(record.prompt_id.clone()).or_insert_with(|| {
            order.push(record.prompt_id.clone());
            Vec::new()
        });
        entry.push((record.sample_index, record.text.as_str()));
    }
    order
        .into_iter()
        .map(|prompt_id| {
            let mut samples = by_prompt.remove(&prompt_id).unwrap_or_default();
            samples.sort_by_key(|(idx, _)| *idx);
            ResponseGroup {
                prompt_id,
                texts: samples.into_iter().map(|(_, t)| t.to_string()).collect(),
            }
        })
        .collect()
}

/// One scored metric, serialized into score documents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricOutput {
    pub metric: String,
    pub value: f64,
    pub params: serde_json::Value,
    /// Per-prompt breakdown where the metric has one; `null` otherwise.
    pub per_prompt: Option<Vec<PerPromptValue>>,
}

/// A per-prompt contribution to an aggregate metric.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerPromptValue {
    pub prompt_id: String,
    pub value: f64,
}

/// The collapse decision for one (baseline, comparison) diversity pair.
///
/// `relative_gap` is `(d_simple - d_template) / d_simple`; the pair is
/// `collapsed` when the gap exceeds `tau`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CollapseVerdict {
    pub d_simple: f64,
    pub d_template: f64,
    pub relative_gap: f64,
    pub collapsed: bool,
    pub tau: f64,
}

/// Computes the collapse verdict for a diversity pair.
///
/// Errors when `d_simple <= 0` (the gap is undefined), when either value
/// is negative or non-finite, or when `tau` is outside `(0, 1)`.
pub fn collapse_verdict(d_simple: f64, d_template: f64, tau: f64) -> Result<CollapseVerdict> {
    if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
        return Err(Error::metric(format!(
            "collapse threshold tau must be in (0, 1), got {tau}"
        )));
    }
    if !d_simple.is_finite() || !d_template.is_finite() {
        return Err(Error::metric(format!(
            "collapse verdict requires finite diversity values, got ({d_simple}, {d_template})"
        )));
    }
    if d_simple <= 0.0 {
        return Err(Error::metric(format!(
            "collapse gap undefined: baseline diversity must be positive, got {d_simple}"
        )));
    }
    if d_template < 0.0 {
        return Err(Error::metric(format!(
            "collapse verdict requires non-negative comparison diversity, got {d_template}"
        )));
    }
    let relative_gap = (d_simple - d_template) / d_simple;
    Ok(CollapseVerdict {
        d_simple,
        d_template,
        relative_gap,
        collapsed: relative_gap > tau,
        tau,
    })
}

//! Semantic diversity: mean pairwise cosine distance between the
//! embeddings of responses to the same prompt, averaged over prompts.
//!
//! With unit-normalized embeddings the per-pair distance `1 - cos` lies in
//! `[0, 2]`, so the aggregate does too: 0 means every response to a prompt
//! landed on the same embedding; values near 1 mean mutually orthogonal
//! responses.

use crate::embedclient::EmbeddingVector;
use crate::error::{Error, Result};
use crate::metrics::{names, MetricOutput, PerPromptValue};

/// Cosine distance `1 - cos(a, b)`, clamped to `[0, 2]` against float
/// round-off. Errors on dimension mismatch or zero-norm input.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::metric(format!(
            "cosine distance dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dot = 0.0;
    for (x, y) in a.values.iter().zip(b.values.iter()) {
        dot += x * y;
    }
    let (norm_a, norm_b) = (a.norm(), b.norm());
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::metric(
            "cosine distance undefined for zero-norm embedding".to_string(),
        ));
    }
    let distance = 1.0 - dot / (norm_a * norm_b);
    Ok(distance.clamp(0.0, 2.0))
}

/// Semantic diversity score with its per-prompt breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDiversityScore {
    /// Mean of the per-prompt values.
    pub value: f64,
    /// `(prompt_id, mean pairwise distance)` per prompt, input order.
    pub per_prompt: Vec<(String, f64)>,
    pub num_prompts: usize,
    /// Responses per prompt when uniform across prompts; `None` if ragged.
    pub responses_per_prompt: Option<usize>,
}

impl SemanticDiversityScore {
    pub fn to_output(&self) -> MetricOutput {
        MetricOutput {
            metric: names::SEMANTIC_DIVERSITY.to_string(),
            value: self.value,
            params: serde_json::json!({
                "num_prompts": self.num_prompts,
                "responses_per_prompt": self.responses_per_prompt,
            }),
            per_prompt: Some(
                self.per_prompt
                    .iter()
                    .map(|(prompt_id, value)| PerPromptValue {
                        prompt_id: prompt_id.clone(),
                        value: *value,
                    })
                    .collect(),
            ),
        }
    }
}

/// Mean pairwise cosine distance over all `k*(k-1)/2` pairs in one group.
pub fn mean_pairwise_distance(vectors: &[EmbeddingVector]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::metric(format!(
            "pairwise distance needs at least 2 embeddings, got {}",
            vectors.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            sum += cosine_distance(&vectors[i], &vectors[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Semantic diversity over `(prompt_id, embeddings)` groups.
///
/// Every group must hold at least two embeddings of a common dimension;
/// the aggregate is the unweighted mean of per-prompt means.
pub fn semantic_diversity(groups: &[(String, Vec<EmbeddingVector>)]) -> Result<SemanticDiversityScore> {
    if groups.is_empty() {
        return Err(Error::metric(
            "semantic diversity needs at least one prompt group".to_string(),
        ));
    }
    let mut per_prompt = Vec::with_capacity(groups.len());
    let mut k_uniform = Some(groups[0].1.len());
    for (prompt_id, vectors) in groups {
        if vectors.len() < 2 {
            return Err(Error::metric(format!(
                "semantic diversity for prompt {prompt_id:?} needs at least 2 responses, got {}",
                vectors.len()
            )));
        }
        if k_uniform != Some(vectors.len()) {
            k_uniform = None;
        }
        let mean = mean_pairwise_distance(vectors).map_err(|e| {
            Error::metric(format!("prompt {prompt_id:?}: {e}"))
        })?;
        per_prompt.push((prompt_id.clone(), mean));
    }
    let value = per_prompt.iter().map(|(_, v)| v).sum::<f64>() / per_prompt.len() as f64;
    Ok(SemanticDiversityScore {
        value,
        num_prompts: groups.len(),
        responses_per_prompt: k_uniform,
        per_prompt,
    })
}

//! Structural diversity: how much surface shape varies between responses
//! to the same prompt.
//!
//! For each prompt we take the population standard deviation (divide by
//! `k`, not `k - 1`) of three per-response statistics — word-token count,
//! sentence count, and content-word ratio — then average each std over
//! prompts. All zeros means every response to a prompt has the same
//! shape, however different the words.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::textstats::{content_word_ratio, sentence_count, tokenize, StopwordSet};
use crate::metrics::{names, MetricOutput, ResponseGroup};

/// Mean per-prompt spread of the three surface statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralDiversity {
    pub std_token_count: f64,
    pub std_sentence_count: f64,
    pub std_content_word_ratio: f64,
}

impl StructuralDiversity {
    pub fn to_outputs(&self, num_prompts: usize) -> Vec<MetricOutput> {
        let params = serde_json::json!({ "num_prompts": num_prompts });
        [
            (names::STD_TOKEN_COUNT, self.std_token_count),
            (names::STD_SENTENCE_COUNT, self.std_sentence_count),
            (names::STD_CONTENT_WORD_RATIO, self.std_content_word_ratio),
        ]
        .into_iter()
        .map(|(metric, value)| MetricOutput {
            metric: metric.to_string(),
            value,
            params: params.clone(),
            per_prompt: None,
        })
        .collect()
    }
}

fn population_std(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    variance.sqrt()
}

/// Computes structural diversity over response groups.
///
/// Every group needs at least two responses, and every response must
/// contain at least one word token (the content-word ratio is undefined
/// otherwise); violations name the offending prompt.
pub fn structural_diversity(
    groups: &[ResponseGroup],
    stopwords: &StopwordSet,
) -> Result<StructuralDiversity> {
    if groups.is_empty() {
        return Err(Error::metric(
            "structural diversity needs at least one prompt group".to_string(),
        ));
    }
    let mut sums = [0.0f64; 3];
    for group in groups {
        if group.texts.len() < 2 {
            return Err(Error::metric(format!(
                "structural diversity for prompt {:?} needs at least 2 responses, got {}",
                group.prompt_id,
                group.texts.len()
            )));
        }
        let mut token_counts = Vec::with_capacity(group.texts.len());
        let mut sentence_counts = Vec::with_capacity(group.texts.len());
        let mut ratios = Vec::with_capacity(group.texts.len());
        for text in &group.texts {
            token_counts.push(tokenize(text).len() as f64);
            sentence_counts.push(sentence_count(text) as f64);
            ratios.push(content_word_ratio(text, stopwords).map_err(|e| {
                Error::metric(format!("prompt {:?}: {e}", group.prompt_id))
            })?);
        }
        sums[0] += population_std(&token_counts);
        sums[1] += population_std(&sentence_counts);
        sums[2] += population_std(&ratios);
    }
    let n = groups.len() as f64;
    Ok(StructuralDiversity {
        std_token_count: sums[0] / n,
        std_sentence_count: sums[1] / n,
        std_content_word_ratio: sums[2] / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(prompt_id: &str, texts: &[&str]) -> ResponseGroup {
        ResponseGroup {
            prompt_id: prompt_id.to_string(),
            texts: texts.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn token_count_std_hand_cases() {
        // Token counts [3, 5]: population std 1. Counts [1, 1, 4]: std sqrt(2).
        let two = population_std(&[3.0, 5.0]);
        assert!((two - 1.0).abs() < 1e-12);
        let three = population_std(&[1.0, 1.0, 4.0]);
        assert!((three - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_responses_give_all_zero_stds() {
        let groups = vec![group("p1", &["The same words here.", "The same words here."])];
        let s = structural_diversity(&groups, StopwordSet::english()).unwrap();
        assert_eq!(s.std_token_count, 0.0);
        assert_eq!(s.std_sentence_count, 0.0);
        assert_eq!(s.std_content_word_ratio, 0.0);
    }

    #[test]
    fn token_count_spread_matches_hand_computation() {
        // "one two three" -> 3 tokens; "one two three four five" -> 5.
        let groups = vec![group("p1", &["one two three", "one two three four five"])];
        let s = structural_diversity(&groups, StopwordSet::english()).unwrap();
        assert!((s.std_token_count - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregates_mean_over_prompts() {
        let groups = vec![
            group("p1", &["one two three", "one two three four five"]), // std 1
            group("p2", &["word", "word"]),                             // std 0
        ];
        let s = structural_diversity(&groups, StopwordSet::english()).unwrap();
        assert!((s.std_token_count - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sentence_count_std() {
        let groups = vec![group("p1", &["One. Two. Three.", "Only one sentence"])];
        let s = structural_diversity(&groups, StopwordSet::english()).unwrap();
        // Sentence counts [3, 1]: mean 2, population std 1.
        assert!((s.std_sentence_count - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tokenless_response_is_an_error_naming_the_prompt() {
        let groups = vec![group("p7", &["fine text", "?!"])];
        let err = structural_diversity(&groups, StopwordSet::english()).unwrap_err();
        assert!(err.to_string().contains("p7"), "error should name prompt: {err}");
    }

    #[test]
    fn single_response_group_is_rejected() {
        let groups = vec![group("p1", &["alone"])];
        assert!(structural_diversity(&groups, StopwordSet::english()).is_err());
        assert!(structural_diversity(&[], StopwordSet::english()).is_err());
    }
}

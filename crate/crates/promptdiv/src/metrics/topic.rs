//! Topic diversity: Shannon entropy of the label distribution, normalized
//! by the log of the number of distinct labels observed.
//!
//! The normalization makes the score base-independent and maps it to
//! `[0, 1]`: 1 for a uniform spread over the observed labels, 0 when all
//! responses share one label. A single-label distribution is defined as 0
//! (`ln 1` would otherwise divide by zero).

use crate::error::{Error, Result};
use crate::labeling::LabelDistribution;
use crate::metrics::{names, MetricOutput};

/// Normalized topic entropy with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDiversityScore {
    /// `H / ln(support)` in `[0, 1]`; 0 when `support == 1`.
    pub value: f64,
    /// Shannon entropy of the distribution, in nats.
    pub entropy_nats: f64,
    /// Number of distinct labels observed.
    pub support: usize,
    /// Number of labeled responses.
    pub total: u64,
}

impl TopicDiversityScore {
    pub fn to_output(&self) -> MetricOutput {
        MetricOutput {
            metric: names::TOPIC_DIVERSITY.to_string(),
            value: self.value,
            params: serde_json::json!({
                "entropy_nats": self.entropy_nats,
                "support": self.support,
                "total": self.total,
            }),
            per_prompt: None,
        }
    }
}

/// Computes normalized topic entropy over a label distribution.
pub fn topic_diversity(dist: &LabelDistribution) -> Result<TopicDiversityScore> {
    let support = dist.support();
    let total = dist.total();
    if support == 0 || total == 0 {
        return Err(Error::metric(
            "topic diversity undefined for an empty label distribution".to_string(),
        ));
    }
    let mut entropy_nats = 0.0;
    for &count in dist.counts().values() {
        let p = count as f64 / total as f64;
        entropy_nats -= p * p.ln();
    }
    entropy_nats = entropy_nats.max(0.0);
    let value = if support == 1 {
        0.0
    } else {
        (entropy_nats / (support as f64).ln()).clamp(0.0, 1.0)
    };
    Ok(TopicDiversityScore {
        value,
        entropy_nats,
        support,
        total,
    })
}

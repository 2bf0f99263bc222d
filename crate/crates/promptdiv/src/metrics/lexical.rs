//! Lexical diversity: distinct-n and self-BLEU over a pooled response set.
//!
//! distinct-n is the standard pooled ratio: unique word n-grams divided by
//! total n-gram occurrences across all responses, never spanning response
//! boundaries. Higher means more lexically diverse.
//!
//! self-BLEU scores each response as a hypothesis against all the others
//! as references and averages; lower means more diverse. Definition:
//! uniform weights over 1..4-gram precisions, clipped counts, the standard
//! brevity penalty (closest reference length, ties toward the shorter),
//! and additive +1/+1 smoothing applied only to precision orders with zero
//! matches. An empty hypothesis scores 0.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::textstats::tokenize;
use crate::metrics::{names, MetricOutput};

/// Highest n-gram order used by BLEU.
const BLEU_MAX_ORDER: usize = 4;

/// The distinct-n battery (n = 2..5) plus self-BLEU for one response set.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalDiversity {
    /// `n -> distinct_n` for n in 2..=5.
    pub distinct: BTreeMap<usize, f64>,
    pub self_bleu: f64,
    pub num_responses: usize,
}

impl LexicalDiversity {
    pub fn to_outputs(&self) -> Vec<MetricOutput> {
        let params = serde_json::json!({ "num_responses": self.num_responses });
        let mut outputs: Vec<MetricOutput> = self
            .distinct
            .iter()
            .map(|(n, value)| MetricOutput {
                metric: names::distinct(*n),
                value: *value,
                params: params.clone(),
                per_prompt: None,
            })
            .collect();
        outputs.push(MetricOutput {
            metric: names::SELF_BLEU.to_string(),
            value: self.self_bleu,
            params,
            per_prompt: None,
        });
        outputs
    }
}

/// Computes distinct-2..5 and self-BLEU over one pooled response set.
pub fn lexical_diversity(responses: &[String]) -> Result<LexicalDiversity> {
    let mut distinct = BTreeMap::new();
    for n in 2..=5 {
        distinct.insert(n, distinct_n(responses, n)?);
    }
    Ok(LexicalDiversity {
        distinct,
        self_bleu: self_bleu(responses)?,
        num_responses: responses.len(),
    })
}

/// Joins a token window into a single hashable n-gram key. Tokens contain
/// only letters/digits/apostrophes, so the separator cannot collide.
fn gram_key(window: &[String]) -> String {
    window.join("\u{1f}")
}

/// Pooled distinct-n: unique n-grams / total n-gram occurrences.
///
/// Errors when `n` is outside `[2, 5]` or no response yields an n-gram.
pub fn distinct_n(responses: &[String], n: usize) -> Result<f64> {
    if !(2..=5).contains(&n) {
        return Err(Error::metric(format!("distinct-n order must be in [2, 5], got {n}")));
    }
    let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut total = 0u64;
    for response in responses {
        let tokens = tokenize(response);
        if tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            seen.insert(gram_key(window));
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::metric(format!(
            "distinct-{n} undefined: no response yields a {n}-gram ({} responses)",
            responses.len()
        )));
    }
    Ok(seen.len() as f64 / total as f64)
}

/// For one n-gram: the two largest per-response counts and who holds the
/// largest. `max_excluding(i)` then answers "highest count among all
/// responses other than i" in O(1), which keeps clipping linear.
#[derive(Debug, Clone, Copy, Default)]
struct TopTwo {
    top: u64,
    top_holder: usize,
    second: u64,
}

impl TopTwo {
    fn update(&mut self, holder: usize, count: u64) {
        if count > self.top {
            if self.top_holder != holder {
                self.second = self.top;
            }
            self.top = count;
            self.top_holder = holder;
        } else if holder != self.top_holder && count > self.second {
            self.second = count;
        }
    }

    fn max_excluding(&self, holder: usize) -> u64 {
        if self.top_holder == holder {
            self.second
        } else {
            self.top
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(gram_key(window)).or_insert(0) += 1;
        }
    }
    counts
}

/// Closest reference length to `c` among `lengths`, excluding index
/// `skip`; ties break toward the shorter reference.
fn closest_ref_length(lengths: &[usize], skip: usize, c: usize) -> usize {
    let mut best: Option<usize> = None;
    for (j, &len) in lengths.iter().enumerate() {
        if j == skip {
            continue;
        }
        best = Some(match best {
            None => len,
            Some(current) => {
                let (d_new, d_cur) = (len.abs_diff(c), current.abs_diff(c));
                if d_new < d_cur || (d_new == d_cur && len < current) {
                    len
                } else {
                    current
                }
            }
        });
    }
    best.unwrap_or(0)
}

/// Mean BLEU of each response against all others as references.
pub fn self_bleu(responses: &[String]) -> Result<f64> {
    if responses.len() < 2 {
        return Err(Error::metric(format!(
            "self-BLEU needs at least 2 responses, got {}",
            responses.len()
        )));
    }
    let tokenized: Vec<Vec<String>> = responses.iter().map(|r| tokenize(r)).collect();
    let lengths: Vec<usize> = tokenized.iter().map(|t| t.len()).collect();

    // Per order, the top-two per-response counts of every n-gram in the set.
    let mut tables: Vec<HashMap<String, TopTwo>> = Vec::with_capacity(BLEU_MAX_ORDER);
    for n in 1..=BLEU_MAX_ORDER {
        let mut table: HashMap<String, TopTwo> = HashMap::new();
        for (i, tokens) in tokenized.iter().enumerate() {
            for (gram, count) in ngram_counts(tokens, n) {
                table.entry(gram).or_default().update(i, count);
            }
        }
        tables.push(table);
    }

    let mut sum = 0.0;
    for (i, tokens) in tokenized.iter().enumerate() {
        sum += bleu_for_hypothesis(i, tokens, &lengths, &tables);
    }
    Ok((sum / responses.len() as f64).clamp(0.0, 1.0))
}

fn bleu_for_hypothesis(
    i: usize,
    tokens: &[String],
    lengths: &[usize],
    tables: &[HashMap<String, TopTwo>],
) -> f64 {
    let c = tokens.len();
    if c == 0 {
        return 0.0; // nothing to score; defined as zero overlap
    }
    let r = closest_ref_length(lengths, i, c);
    let brevity_penalty = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };

    let mut log_precision_sum = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let total = if c >= n { (c - n + 1) as u64 } else { 0 };
        let mut matches = 0u64;
        for (gram, count) in ngram_counts(tokens, n) {
            let reference_max = tables[n - 1]
                .get(&gram)
                .map(|t| t.max_excluding(i))
                .unwrap_or(0);
            matches += count.min(reference_max);
        }
        let precision = if matches == 0 {
            // Additive smoothing only for zero-match orders (this includes
            // hypotheses too short to form any n-gram: 1/1).
            1.0 / (total + 1) as f64
        } else {
            matches as f64 / total as f64
        };
        log_precision_sum += precision.ln() / BLEU_MAX_ORDER as f64;
    }
    brevity_penalty * log_precision_sum.exp()
}

//! Brute-force reference implementations of the metric kernels. They are
//! written naively — linear scans, no hash maps, no shared code with the
//! library — so that agreement with the optimized implementations is
//! meaningful evidence of correctness.

/// Word tokenizer following the same documented rule as the library:
/// maximal runs of alphanumerics/apostrophes, case-folded, with U+2019
/// folded to the ASCII apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for mut c in text.chars() {
        if c == '\u{2019}' {
            c = '\'';
        }
        if c.is_alphanumeric() || c == '\'' {
            for lower in c.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Pooled distinct-n; `None` when the corpus yields no n-gram at all.
pub fn distinct_n(responses: &[String], n: usize) -> Option<f64> {
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut total = 0usize;
    for response in responses {
        let tokens = tokenize(response);
        if tokens.len() < n {
            continue;
        }
        for window in tokens.windows(n) {
            total += 1;
            if !seen.iter().any(|g| g.as_slice() == window) {
                seen.push(window.to_vec());
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(seen.len() as f64 / total as f64)
    }
}

fn occurrences(tokens: &[String], gram: &[String]) -> usize {
    if tokens.len() < gram.len() {
        return 0;
    }
    tokens.windows(gram.len()).filter(|w| *w == gram).count()
}

/// BLEU of one hypothesis against a reference set: uniform 1..4-gram
/// weights, clipped counts, brevity penalty with the closest reference
/// length (ties toward the shorter), and 1/(total+1) smoothing for
/// orders with zero matches. An empty hypothesis scores 0.
fn bleu(hypothesis: &[String], references: &[&[String]]) -> f64 {
    let c = hypothesis.len();
    if c == 0 {
        return 0.0;
    }
    let mut r = references[0].len();
    for reference in references {
        let len = reference.len();
        if len.abs_diff(c) < r.abs_diff(c) || (len.abs_diff(c) == r.abs_diff(c) && len < r) {
            r = len;
        }
    }
    let brevity_penalty = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };

    let mut log_precision_sum = 0.0;
    for n in 1..=4 {
        let total = if c >= n { c - n + 1 } else { 0 };
        let mut matches = 0usize;
        let mut counted: Vec<&[String]> = Vec::new();
        if c >= n {
            for gram in hypothesis.windows(n) {
                if counted.contains(&gram) {
                    continue;
                }
                counted.push(gram);
                let in_hypothesis = occurrences(hypothesis, gram);
                let best_reference = references
                    .iter()
                    .map(|reference| occurrences(reference, gram))
                    .max()
                    .unwrap_or(0);
                matches += in_hypothesis.min(best_reference);
            }
        }
        let precision = if matches == 0 {
            1.0 / (total + 1) as f64
        } else {
            matches as f64 / total as f64
        };
        log_precision_sum += precision.ln() / 4.0;
    }
    brevity_penalty * log_precision_sum.exp()
}

/// Mean BLEU of each response against all the others as references;
/// `None` with fewer than two responses.
pub fn self_bleu(responses: &[String]) -> Option<f64> {
    if responses.len() < 2 {
        return None;
    }
    let tokenized: Vec<Vec<String>> = responses.iter().map(|r| tokenize(r)).collect();
    let mut sum = 0.0;
    for i in 0..tokenized.len() {
        let references: Vec<&[String]> = tokenized
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, tokens)| tokens.as_slice())
            .collect();
        sum += bleu(&tokenized[i], &references);
    }
    Some(sum / tokenized.len() as f64)
}

/// Shannon entropy of a label multiset normalized by ln(support);
/// `None` when empty, 0 for single-label multisets.
pub fn topic_diversity(labels: &[String]) -> Option<f64> {
    if labels.is_empty() {
        return None;
    }
    let mut distinct: Vec<&String> = Vec::new();
    for label in labels {
        if !distinct.contains(&label) {
            distinct.push(label);
        }
    }
    if distinct.len() == 1 {
        return Some(0.0);
    }
    let total = labels.len() as f64;
    let mut entropy = 0.0;
    for label in &distinct {
        let count = labels.iter().filter(|l| l == label).count() as f64;
        let p = count / total;
        entropy -= p * p.ln();
    }
    Some(entropy / (distinct.len() as f64).ln())
}

/// Truncated top-k entropy with one residual bucket for the unobserved
/// tail: `H = -Σ p ln p - r ln r` with `r = max(0, 1 - Σ p)`.
pub fn step_entropy(logprobs: &[f64]) -> f64 {
    let mut mass = 0.0;
    let mut entropy = 0.0;
    for lp in logprobs {
        let p = lp.exp();
        mass += p;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    let residual = 1.0 - mass;
    if residual > 0.0 {
        entropy -= residual * residual.ln();
    }
    entropy.max(0.0)
}

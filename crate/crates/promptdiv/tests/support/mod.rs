//! Shared helpers for the integration tests: brute-force metric oracles
//! and randomized corpus generators.
#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Word pool for randomized corpora. Mixes plain ASCII, accented words,
/// apostrophes (both ASCII and U+2019), digits, attached punctuation,
/// and case variation to stress tokenization.
pub const WORDS: &[&str] = &[
    "the",
    "cat",
    "sat",
    "on",
    "a",
    "mat",
    "dog",
    "ran",
    "fast",
    "slow",
    "Éclair",
    "naïve",
    "don't",
    "it\u{2019}s",
    "ZEBRA",
    "42",
    "blue7",
    "news—flash",
    "end.",
    "François",
    "über",
    "résumé",
];

/// Topic labels for randomized label multisets.
pub const LABELS: &[&str] = &["sports", "health", "politics", "science", "tech", "arts"];

/// 2–8 responses of 1–20 words each.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<String> {
    let k = rng.random_range(2..=8);
    (0..k).map(|_| random_response(rng)).collect()
}

/// One response of 1–20 words.
pub fn random_response(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=20);
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1–24 labels drawn from [`LABELS`]; single-label multisets occur.
pub fn random_labels(rng: &mut ChaCha8Rng) -> Vec<String> {
    let k = rng.random_range(1..=24);
    (0..k)
        .map(|_| LABELS[rng.random_range(0..LABELS.len())].to_string())
        .collect()
}

/// 1–8 logprobs whose probabilities sum to at most one; roughly every
/// fifth draw sums to exactly one (no residual bucket).
pub fn random_step_logprobs(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = rng.random_range(1..=8);
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let raw_sum: f64 = raw.iter().sum();
    let mass = if rng.random_range(0..5) == 0 {
        1.0
    } else {
        rng.random::<f64>().max(1e-3)
    };
    raw.iter().map(|p| (p * mass / raw_sum).ln()).collect()
}

pub fn assert_close(actual: f64, expected: f64, tolerance: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tolerance,
        "{what}: got {actual}, want {expected} (tolerance {tolerance})"
    );
}

#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::genclient::parse_completion_response;
use promptdiv::metrics::entropy::step_entropy;

// Completion bodies carry per-step logprob maps with untrusted floats.
// Decoding must not panic, and any step that survives decoding must be
// safe to feed straight into the entropy metric: the metric may reject it
// (e.g. probability mass over 1) but must never panic, and anything it
// accepts must be a finite, non-negative entropy.
fuzz_target!(|data: &[u8]| {
    let Ok(choices) = parse_completion_response(data, "fuzz") else {
        return;
    };
    for choice in &choices {
        for step in choice.logprobs.iter().flatten() {
            if let Ok(h) = step_entropy(step) {
                assert!(
                    h.is_finite() && h >= 0.0,
                    "accepted step entropy is not a sane value: {h}"
                );
            }
        }
    }
});

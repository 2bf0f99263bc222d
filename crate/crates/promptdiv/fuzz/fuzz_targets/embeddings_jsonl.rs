#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::embedclient::parse_embeddings;

// Embedding files are rewritten on every resume, so the parser is on the
// hot path for cached runs. It must reject dimension mismatches and
// malformed vectors without panicking.
fuzz_target!(|data: &[u8]| {
    let Ok(set) = parse_embeddings(data, "fuzz") else {
        return;
    };
    // Whatever parses must present a coherent set: a dimension exists
    // exactly when the set is non-empty.
    assert_eq!(set.dim().is_some(), !set.is_empty(), "dim/len disagree");
});

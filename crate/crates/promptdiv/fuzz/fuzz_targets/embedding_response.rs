#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::embedclient::parse_embedding_response;

// Bodies returned by the /v1/embeddings endpoint are attacker-adjacent
// input (any HTTP middlebox can rewrite them), so decoding must never
// panic no matter what comes over the wire.
fuzz_target!(|data: &[u8]| {
    let _ = parse_embedding_response(data, "fuzz");
});

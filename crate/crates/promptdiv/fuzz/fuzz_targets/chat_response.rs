#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::genclient::parse_chat_response_bytes;

// Chat-completion bodies are used both for generation and for topic
// extraction; the decoder must tolerate arbitrary bytes without panicking.
fuzz_target!(|data: &[u8]| {
    let _ = parse_chat_response_bytes(data, "fuzz");
});

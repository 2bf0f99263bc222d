#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::corpus::parse_generations;

// Generation files come back from the sampling stage but are also safe to
// hand-edit, so the parser must reject garbage gracefully and accepted
// records must round trip bit-for-bit.
fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_generations(data, "fuzz") else {
        return;
    };
    let mut line_buf = Vec::new();
    promptdiv::corpus::write_jsonl(&records, &mut line_buf).expect("serialize generations");
    let reparsed = parse_generations(&line_buf, "fuzz-roundtrip").expect("reparse generations");
    assert_eq!(reparsed, records, "generation round trip drifted");
});

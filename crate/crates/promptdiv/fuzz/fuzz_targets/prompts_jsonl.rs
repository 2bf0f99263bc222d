#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::corpus::parse_prompts;

// Prompt files are user-supplied JSONL. Parsing must never panic, and
// anything that parses must survive a serialize -> reparse round trip
// unchanged (the render stage rewrites prompt metadata verbatim).
fuzz_target!(|data: &[u8]| {
    let Ok(set) = parse_prompts(data, "fuzz") else {
        return;
    };
    let mut line_buf = Vec::new();
    promptdiv::corpus::write_jsonl(set.records(), &mut line_buf).expect("serialize prompts");
    let reparsed = parse_prompts(&line_buf, "fuzz-roundtrip").expect("reparse prompts");
    assert_eq!(reparsed.records(), set.records(), "prompt round trip drifted");
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::labeling::parse_labels;

// Label files feed the topic-entropy metric. Arbitrary bytes must never
// panic the parser, and accepted records must round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_labels(data, "fuzz") else {
        return;
    };
    let mut line_buf = Vec::new();
    promptdiv::corpus::write_jsonl(&records, &mut line_buf).expect("serialize labels");
    let reparsed = parse_labels(&line_buf, "fuzz-roundtrip").expect("reparse labels");
    assert_eq!(reparsed, records, "label round trip drifted");
});

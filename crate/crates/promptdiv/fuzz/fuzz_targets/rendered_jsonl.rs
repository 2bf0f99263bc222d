#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::templates::parse_rendered;

// Rendered-prompt files sit on the render -> generate handoff. The parser
// must not panic on arbitrary bytes, and accepted records must round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_rendered(data, "fuzz") else {
        return;
    };
    let mut line_buf = Vec::new();
    promptdiv::corpus::write_jsonl(&records, &mut line_buf).expect("serialize rendered");
    let reparsed = parse_rendered(&line_buf, "fuzz-roundtrip").expect("reparse rendered");
    assert_eq!(reparsed, records, "rendered round trip drifted");
});

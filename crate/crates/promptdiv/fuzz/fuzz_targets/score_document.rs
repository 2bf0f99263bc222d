#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::report::parse_score_document;

// Score documents cross the score -> report stage boundary and may be
// copied between machines by hand. They must parse without panicking and
// round trip exactly so reports built from copies match the originals.
fuzz_target!(|data: &[u8]| {
    let Ok(doc) = parse_score_document(data, "fuzz") else {
        return;
    };
    let bytes = serde_json::to_vec(&doc).expect("serialize score document");
    let reparsed = parse_score_document(&bytes, "fuzz-roundtrip").expect("reparse score document");
    assert_eq!(reparsed, doc, "score document round trip drifted");
});

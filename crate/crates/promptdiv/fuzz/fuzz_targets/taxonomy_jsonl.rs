#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::labeling::{classify_keyword, parse_taxonomy};

// Taxonomies are user-authored JSONL. A table that parses must be usable:
// classifying arbitrary text against it must not panic and must return a
// label from the table or the reserved "other" bucket.
fuzz_target!(|data: &[u8]| {
    let Ok(taxonomy) = parse_taxonomy(data, "fuzz") else {
        return;
    };
    let probe_from_input = String::from_utf8_lossy(data);
    for text in [
        "",
        "the match ended in extra time",
        "parliament votes on the new budget",
        probe_from_input.as_ref(),
    ] {
        let label = classify_keyword(text, &taxonomy);
        assert!(
            label == "other" || taxonomy.labels().contains(&label.as_str()),
            "classifier returned a label outside the taxonomy: {label:?}"
        );
    }
});

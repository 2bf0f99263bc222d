#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::config::{parse_config, ConfigFormat};

// Config files are the very first thing the CLI reads. Both the TOML and
// JSON decoders must reject arbitrary bytes gracefully, and any config
// that parses must survive a JSON re-encode (the cache and manifests
// embed config fragments as JSON).
fuzz_target!(|data: &[u8]| {
    let toml_parsed = parse_config(data, "fuzz.toml", ConfigFormat::Toml);
    let json_parsed = parse_config(data, "fuzz.json", ConfigFormat::Json);
    for config in [toml_parsed, json_parsed].into_iter().flatten() {
        let bytes = serde_json::to_vec(&config).expect("serialize config");
        let reparsed =
            parse_config(&bytes, "fuzz-roundtrip.json", ConfigFormat::Json).expect("reparse");
        assert_eq!(reparsed, config, "config round trip drifted");
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::corpus::RunManifest;

// Manifests gate resumability: a stale or corrupted manifest decides
// whether cached generations are reused. Decoding arbitrary bytes must not
// panic, and a decoded manifest must re-encode to an equal value so
// reruns can compare manifests byte-for-byte.
fuzz_target!(|data: &[u8]| {
    let Ok(manifest) = serde_json::from_slice::<RunManifest>(data) else {
        return;
    };
    let bytes = serde_json::to_vec(&manifest).expect("serialize manifest");
    let reparsed = serde_json::from_slice::<RunManifest>(&bytes).expect("reparse manifest");
    assert_eq!(reparsed, manifest, "manifest round trip drifted");
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::protocol::MetricSelection;

// --metrics takes free-form tokens straight from the command line; the
// selector must reject unknown or contradictory names without panicking.
fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let tokens: Vec<String> = text
        .split([',', ' ', '\n', '\t'])
        .map(|t| t.to_string())
        .collect();
    let _ = MetricSelection::parse(&tokens);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::report::{emit, Report, ReportFormat};

// Reports are consumed back by downstream tooling (--format json) and
// re-rendered to markdown/CSV. Any report that decodes must render in all
// three formats without panicking, and the JSON emitter's output must
// decode back to an equal report.
fuzz_target!(|data: &[u8]| {
    let Ok(report) = serde_json::from_slice::<Report>(data) else {
        return;
    };
    let json = emit(&report, ReportFormat::Json);
    let _ = emit(&report, ReportFormat::Markdown);
    let _ = emit(&report, ReportFormat::Csv);
    let reparsed = serde_json::from_slice::<Report>(&json).expect("reparse emitted report");
    assert_eq!(reparsed, report, "report emit/decode round trip drifted");
});

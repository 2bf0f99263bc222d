#![no_main]

use libfuzzer_sys::fuzz_target;
use promptdiv::templates::{ModeKind, ModelFamily, PromptMode, Renderer, TemplateTable};

// Template tables are the most security-sensitive input: they are shared
// between experimenters and substituted into every prompt. Any table that
// parses must also render without panicking for every family x mode pair.
fuzz_target!(|data: &[u8]| {
    let Ok(table) = TemplateTable::parse(data, "fuzz") else {
        return;
    };
    let renderer = Renderer::new(table);
    for family in ModelFamily::ALL {
        for kind in ModeKind::STRUCTURED {
            let _ = renderer.render("probe instruction", family, PromptMode::new(kind));
            let _ = renderer.render(
                "probe instruction",
                family,
                PromptMode::with_diversity_suffix(kind),
            );
        }
    }
});

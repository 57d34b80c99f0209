#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = calderon_core::config::GoldenRecord::parse(text) {
            let _ = g.to_text();
        }
    }
});

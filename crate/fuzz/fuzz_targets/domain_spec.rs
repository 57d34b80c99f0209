#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = text.parse::<calderon_core::geometry::PrefractalSpec>() {
            if spec.level <= 3 {
                let _ = calderon_core::geometry::generate_prefractal(&spec);
            }
        }
    }
});

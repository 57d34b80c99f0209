#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(e) = calderon_core::expr::Expression::parse(text) {
            let _ = e.eval(0.25, 0.75);
            let _ = e.laplacian().eval(0.25, 0.75);
        }
    }
});

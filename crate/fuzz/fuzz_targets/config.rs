#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = calderon_core::config::ExperimentConfig::parse(text) {
            let again = calderon_core::config::ExperimentConfig::parse(&cfg.to_text()).expect("canonical text parses");
            assert_eq!(again.hash(), cfg.hash());
        }
    }
});

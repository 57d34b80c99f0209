#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = calderon_core::mesh::parse_mesh(text) {
            let again = calderon_core::mesh::write_mesh(&mesh);
            assert!(calderon_core::mesh::parse_mesh(&again).is_ok());
        }
    }
});

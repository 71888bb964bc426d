#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = hproj_core::ComplexMatrix::from_json_str(s) {
            // anything accepted must round-trip
            let back = serde_json::to_string(&m.to_rows()).unwrap();
            assert_eq!(hproj_core::ComplexMatrix::from_json_str(&back).unwrap().size(), m.size());
        }
    }
});

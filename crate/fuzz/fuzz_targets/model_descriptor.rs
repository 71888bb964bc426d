#![no_main]

use hproj_core::{KahlerModel, ModelDescriptor};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = serde_json::from_slice::<ModelDescriptor>(data) {
        if let Ok(m) = KahlerModel::from_descriptor(&d) {
            let _ = m.sample_points(1, 2, 0.5);
        }
    }
});

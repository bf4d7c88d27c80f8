#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::scenegen::GroundTruth;

fuzz_target!(|data: &[u8]| {
    if let Ok(gt) = serde_json::from_slice::<GroundTruth>(data) {
        let _ = gt.validate();
    }
});

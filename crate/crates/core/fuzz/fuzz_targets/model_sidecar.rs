#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = posematch::io::model::parse_sidecar(data);
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::correspondence::CorrespondenceSet;

fuzz_target!(|data: &str| {
    let _ = CorrespondenceSet::from_csv(data);
});

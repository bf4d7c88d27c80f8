#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::io::{parse_mask_csv, write_mask_csv};

fuzz_target!(|data: &str| {
    if let Ok(mask) = parse_mask_csv(data) {
        assert_eq!(parse_mask_csv(&write_mask_csv(&mask)).unwrap(), mask);
    }
});

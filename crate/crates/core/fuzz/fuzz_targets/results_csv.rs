#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::bench::{parse_results_csv, BenchSummary};

fuzz_target!(|data: &str| {
    if let Ok(rows) = parse_results_csv(data) {
        let _ = BenchSummary::from_rows(&rows).render();
    }
});

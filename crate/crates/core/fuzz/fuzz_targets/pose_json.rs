#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::solver::PoseEstimate;

fuzz_target!(|data: &str| {
    if let Ok(est) = PoseEstimate::from_json(data) {
        let back = PoseEstimate::from_json(&est.to_json()).expect("re-parse written pose");
        assert_eq!(back.inlier_count, est.inlier_count);
    }
});

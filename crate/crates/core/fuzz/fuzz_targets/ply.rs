#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::io::ply::{parse_ply_cloud, parse_ply_mesh, write_ply_cloud};

fuzz_target!(|data: &str| {
    let _ = parse_ply_mesh(data);
    if let Ok(cloud) = parse_ply_cloud(data) {
        // Whatever parses must survive a write/parse cycle.
        let again = parse_ply_cloud(&write_ply_cloud(&cloud)).expect("re-parse written cloud");
        assert_eq!(again.len(), cloud.len());
    }
});

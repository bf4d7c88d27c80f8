#![no_main]

use libfuzzer_sys::fuzz_target;
use posematch::io::obj::{parse_obj, write_obj};

fuzz_target!(|data: &str| {
    if let Ok(mesh) = parse_obj(data) {
        let again = parse_obj(&write_obj(&mesh)).expect("re-parse written mesh");
        assert_eq!(again.triangles, mesh.triangles);
    }
});

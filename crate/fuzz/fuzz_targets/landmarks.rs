#![no_main]
use libfuzzer_sys::fuzz_target;
use vitl_core::data::io::read_landmarks;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_landmarks(data) {
        if let Some(first) = rows.first() {
            assert!(rows.iter().all(|r| r.dim() == first.dim()));
        }
    }
});

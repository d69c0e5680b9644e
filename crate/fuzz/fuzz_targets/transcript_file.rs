#![no_main]

use gset_core::simnet::Transcript;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Transcript::from_file_bytes(data) {
        assert_eq!(t.to_file_bytes(), data);
        let _ = t.to_string();
    }
});

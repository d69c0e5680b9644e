#![no_main]

use gset_cli::keys;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(pairs) = keys::parse(src) {
        // Rendering and reparsing is lossless.
        let again = keys::parse(&keys::render(&pairs, 0)).expect("rendered fixtures parse");
        assert_eq!(again, pairs);
    }
});

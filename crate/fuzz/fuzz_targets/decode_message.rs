#![no_main]

use gset_core::messages::{decode_as, peek_type};
use gset_core::Message;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = Message::decode(data) else {
        return;
    };
    // Strict decoding: whatever is accepted re-encodes to the same bytes.
    assert_eq!(m.encode().expect("decoded messages encode"), data);
    let ty = peek_type(data).expect("accepted input has a known tag");
    assert_eq!(m.message_type(), ty);
    assert_eq!(decode_as(data, ty).as_ref(), Ok(&m));
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::checkpoint::{from_bytes, to_bytes};

fuzz_target!(|bytes: &[u8]| {
    if let Ok(model) = from_bytes(bytes) {
        let again = from_bytes(&to_bytes(&model)).expect("re-encoded checkpoint loads");
        assert_eq!(again, model);
    }
});

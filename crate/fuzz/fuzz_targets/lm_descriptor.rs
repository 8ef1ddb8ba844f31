#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::lm::InterpDescriptor;

fuzz_target!(|text: &str| {
    if let Ok(d) = InterpDescriptor::parse(text) {
        assert_eq!(InterpDescriptor::parse(&d.render()).expect("rendered descriptor parses"), d);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::lm::{parse_arpa, render_arpa};

fuzz_target!(|text: &str| {
    if let Ok(lm) = parse_arpa(text) {
        // Anything accepted must render to text that parses again.
        parse_arpa(&render_arpa(&lm)).expect("rendered ARPA parses");
    }
});

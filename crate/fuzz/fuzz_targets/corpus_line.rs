#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::corpus::{parse_corpus, parse_utterance_line, render_utterance_line};

fuzz_target!(|text: &str| {
    if let Ok(u) = parse_utterance_line(text, 1) {
        let again = parse_utterance_line(&render_utterance_line(&u), 1).expect("rendered line parses");
        assert_eq!(again, u);
    }
    let _ = parse_corpus(text);
});

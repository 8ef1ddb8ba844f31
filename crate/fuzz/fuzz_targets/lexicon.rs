#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::lexicon::Lexicon;

fuzz_target!(|text: &str| {
    if let Ok(lex) = Lexicon::parse(text) {
        assert_eq!(Lexicon::parse(&lex.to_text()).expect("rendered lexicon parses"), lex);
    }
});

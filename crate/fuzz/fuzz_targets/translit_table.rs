#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::translit::{transliterate_word_based, TranslitTable};

fuzz_target!(|text: &str| {
    if let Ok(t) = TranslitTable::parse_table(text) {
        assert_eq!(TranslitTable::parse_table(&t.table_tsv()).expect("rendered table parses"), t);
        let _ = transliterate_word_based(text, &t);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::translit::{transliterate, TranslitProvider, TranslitTable};

// Input: a word table, a `---` line, then context rules over that table.
fuzz_target!(|text: &str| {
    let (table, rules) = text.split_once("\n---\n").unwrap_or(("", text));
    let Ok(mut t) = TranslitTable::parse_table(table) else { return };
    if t.parse_rules(rules).is_ok() {
        let mut again = TranslitTable::parse_table(table).expect("parsed once already");
        again.parse_rules(&t.rules_tsv()).expect("rendered rules parse");
        assert_eq!(again, t);
        let _ = transliterate(table.lines().next().unwrap_or(""), &TranslitProvider::ContextualRules(t));
    }
});

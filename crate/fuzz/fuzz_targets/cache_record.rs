#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::translit::remote::{parse_cache_record, render_cache_record};

fuzz_target!(|text: &str| {
    if let Ok((src, dst)) = parse_cache_record(text) {
        let line = render_cache_record(&src, &dst);
        assert_eq!(parse_cache_record(line.trim_end_matches('\n')), Ok((src, dst)));
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use sha_asr::config::RunConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::parse(text) {
        assert_eq!(RunConfig::parse(&cfg.to_text()).expect("snapshot parses"), cfg);
    }
});

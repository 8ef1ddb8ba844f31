#![allow(dead_code)]

use sha_asr::corpus::{synthesize_codemix, synthesize_language, SynthParams, SynthSpec, Utterance};
use sha_asr::translit::TranslitTable;
use sha_asr::Lang;

pub struct World {
    pub spec: SynthSpec,
    pub table: TranslitTable,
    pub en: Vec<Utterance>,
    pub hi: Vec<Utterance>,
    pub mix: Vec<Utterance>,
}

pub fn small_world(seed: u64, utts: usize) -> World {
    let (spec, table) = SynthSpec::generate(&SynthParams::default(), seed).unwrap();
    World {
        en: synthesize_language(&spec, Lang::En, utts, seed + 1).unwrap(),
        hi: synthesize_language(&spec, Lang::Hi, utts, seed + 2).unwrap(),
        mix: synthesize_codemix(&spec, 0.5, utts / 2 + 1, seed + 3).unwrap(),
        spec,
        table,
    }
}

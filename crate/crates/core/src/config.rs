//! Run configuration: a flat, sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [model]
//! hidden_dim = 32
//! ```
//!
//! Every key has a default, unknown sections and keys are rejected, and
//! [`RunConfig::to_text`] writes every key so a snapshot reproduces a run.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::analysis::GmmConfig;
use crate::corpus::SynthParams;
use crate::decoder::DecodeConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::trainer::{DataSelector, DistillConfig, EnsembleWeights, Stage, StagePlan};

/// Corpus sizes and text generation for a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub en_train: usize,
    pub hi_train: usize,
    pub mix_train: usize,
    pub en_test: usize,
    pub hi_test: usize,
    pub mix_ratio_hi: f64,
    pub lm_sentences: usize,
    pub lm_test_sentences: usize,
    /// Share of Hindi LM sentences that contain an English run.
    pub hi_text_en_rate: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            en_train: 300,
            hi_train: 300,
            mix_train: 100,
            en_test: 100,
            hi_test: 100,
            mix_ratio_hi: 0.5,
            lm_sentences: 3000,
            lm_test_sentences: 500,
            hi_text_en_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub order: usize,
    pub lambda_en: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            order: 3,
            lambda_en: crate::lm::LAMBDA_EN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranslitMode {
    Word,
    Contextual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslitConfig {
    pub mode: TranslitMode,
    /// Endpoint of the transliteration service used by the remote provider.
    pub remote_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub gmm: GmmConfig,
    pub histogram_bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            gmm: GmmConfig::default(),
            histogram_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthParams,
    pub data: DataConfig,
    pub model: ModelConfig,
    /// One plan per stage, in [`Stage::ALL`] order.
    pub stages: Vec<StagePlan>,
    pub distill: DistillConfig,
    pub lm: LmConfig,
    pub decode: DecodeConfig,
    pub analysis: AnalysisConfig,
    pub translit: TranslitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            synth: SynthParams::default(),
            data: DataConfig::default(),
            model: ModelConfig {
                split_depth: 1,
                ..ModelConfig::default()
            },
            stages: Stage::ALL.iter().map(|&s| StagePlan::new(s)).collect(),
            distill: DistillConfig::default(),
            lm: LmConfig::default(),
            decode: DecodeConfig::default(),
            analysis: AnalysisConfig::default(),
            translit: TranslitConfig {
                mode: TranslitMode::Word,
                remote_url: None,
            },
        }
    }
}

fn parse<T: FromStr>(v: &str, what: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{what}: cannot parse {v:?}")))
}

fn parse_pair(v: &str, what: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("{what}: expected 'lo, hi', got {v:?}")))?;
    Ok((parse(a.trim(), what)?, parse(b.trim(), what)?))
}

const STAGE_KEYS: [&str; 4] = ["epochs", "batch_size", "learning_rate", "data"];

fn keys() -> Vec<(String, &'static str)> {
    let mut out: Vec<(String, &'static str)> = Vec::new();
    let mut add = |section: &str, names: &[&'static str]| {
        out.extend(names.iter().map(|k| (section.to_string(), *k)));
    };
    add("run", &["seed"]);
    add(
        "synth",
        &[
            "num_chenones",
            "feature_dim",
            "vocab_size",
            "chenones_per_word",
            "frames_per_chenone",
            "words_per_utt",
            "mean_scale",
            "noise_scale",
            "lang_offset",
            "accent_swap_rate",
            "successors",
        ],
    );
    add(
        "data",
        &[
            "en_train",
            "hi_train",
            "mix_train",
            "en_test",
            "hi_test",
            "mix_ratio_hi",
            "lm_sentences",
            "lm_test_sentences",
            "hi_text_en_rate",
        ],
    );
    add("model", &["feature_dim", "hidden_dim", "num_shared_blocks", "split_depth", "lookahead"]);
    for s in Stage::ALL {
        add(&format!("stage.{s}"), &STAGE_KEYS);
    }
    add("distill", &["w_kld", "teacher_non_streaming", "teacher_sha"]);
    add("lm", &["order", "smoothing", "lambda_en"]);
    add("decode", &["beam", "acoustic_scale", "lm_scale", "insertion_penalty", "posterior_floor"]);
    add(
        "analysis",
        &["gmm_components", "gmm_restarts", "gmm_tol", "gmm_max_iter", "histogram_bins"],
    );
    add("translit", &["mode", "remote_url"]);
    out
}

impl RunConfig {
    pub fn stage(&self, s: Stage) -> &StagePlan {
        &self.stages[Stage::ALL.iter().position(|&x| x == s).expect("known stage")]
    }

    pub fn stage_mut(&mut self, s: Stage) -> &mut StagePlan {
        &mut self.stages[Stage::ALL.iter().position(|&x| x == s).expect("known stage")]
    }

    /// The acoustic model config; its chenone inventory comes from `[synth]`.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_chenones: self.synth.num_chenones,
            feature_dim: self.synth.feature_dim,
            ..self.model.clone()
        }
    }

    fn get(&self, section: &str, key: &str) -> String {
        let pair = |p: (usize, usize)| format!("{}, {}", p.0, p.1);
        let s = &self.synth;
        let d = &self.data;
        match (section, key) {
            ("run", "seed") => self.seed.to_string(),
            ("synth", "num_chenones") => s.num_chenones.to_string(),
            ("synth", "feature_dim") => s.feature_dim.to_string(),
            ("synth", "vocab_size") => s.vocab_size.to_string(),
            ("synth", "chenones_per_word") => pair(s.chenones_per_word),
            ("synth", "frames_per_chenone") => pair(s.frames_per_chenone),
            ("synth", "words_per_utt") => pair(s.words_per_utt),
            ("synth", "mean_scale") => s.mean_scale.to_string(),
            ("synth", "noise_scale") => s.noise_scale.to_string(),
            ("synth", "lang_offset") => s.lang_offset.to_string(),
            ("synth", "accent_swap_rate") => s.accent_swap_rate.to_string(),
            ("synth", "successors") => s.successors.to_string(),
            ("data", "en_train") => d.en_train.to_string(),
            ("data", "hi_train") => d.hi_train.to_string(),
            ("data", "mix_train") => d.mix_train.to_string(),
            ("data", "en_test") => d.en_test.to_string(),
            ("data", "hi_test") => d.hi_test.to_string(),
            ("data", "mix_ratio_hi") => d.mix_ratio_hi.to_string(),
            ("data", "lm_sentences") => d.lm_sentences.to_string(),
            ("data", "lm_test_sentences") => d.lm_test_sentences.to_string(),
            ("data", "hi_text_en_rate") => d.hi_text_en_rate.to_string(),
            ("model", "feature_dim") => self.model.feature_dim.to_string(),
            ("model", "hidden_dim") => self.model.hidden_dim.to_string(),
            ("model", "num_shared_blocks") => self.model.num_shared_blocks.to_string(),
            ("model", "split_depth") => self.model.split_depth.to_string(),
            ("model", "lookahead") => self.model.lookahead.to_string(),
            ("distill", "w_kld") => self.distill.w_kld.to_string(),
            ("distill", "teacher_non_streaming") => self.distill.ensemble.non_streaming.to_string(),
            ("distill", "teacher_sha") => self.distill.ensemble.sha.to_string(),
            ("lm", "order") => self.lm.order.to_string(),
            ("lm", "smoothing") => "witten-bell".to_string(),
            ("lm", "lambda_en") => self.lm.lambda_en.to_string(),
            ("decode", "beam") => self.decode.beam.map_or_else(|| "inf".to_string(), |b| b.to_string()),
            ("decode", "acoustic_scale") => self.decode.acoustic_scale.to_string(),
            ("decode", "lm_scale") => self.decode.lm_scale.to_string(),
            ("decode", "insertion_penalty") => self.decode.insertion_penalty.to_string(),
            ("decode", "posterior_floor") => self.decode.posterior_floor.to_string(),
            ("analysis", "gmm_components") => self.analysis.gmm.k.to_string(),
            ("analysis", "gmm_restarts") => self.analysis.gmm.restarts.to_string(),
            ("analysis", "gmm_tol") => self.analysis.gmm.tol.to_string(),
            ("analysis", "gmm_max_iter") => self.analysis.gmm.max_iter.to_string(),
            ("analysis", "histogram_bins") => self.analysis.histogram_bins.to_string(),
            ("translit", "mode") => match self.translit.mode {
                TranslitMode::Word => "word".to_string(),
                TranslitMode::Contextual => "contextual".to_string(),
            },
            ("translit", "remote_url") => self.translit.remote_url.clone().unwrap_or_default(),
            (sec, k) => {
                let stage: Stage = sec
                    .strip_prefix("stage.")
                    .and_then(|s| s.parse().ok())
                    .unwrap_or_else(|| panic!("no such key [{sec}] {k}"));
                let p = self.stage(stage);
                match k {
                    "epochs" => p.epochs.to_string(),
                    "batch_size" => p.batch_size.to_string(),
                    "learning_rate" => p.learning_rate.to_string(),
                    "data" => p.data.as_str().to_string(),
                    _ => panic!("no such key [{sec}] {k}"),
                }
            }
        }
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let what = format!("[{section}] {key}");
        let w = what.as_str();
        let s = &mut self.synth;
        let d = &mut self.data;
        match (section, key) {
            ("run", "seed") => self.seed = parse(v, w)?,
            ("synth", "num_chenones") => s.num_chenones = parse(v, w)?,
            ("synth", "feature_dim") => s.feature_dim = parse(v, w)?,
            ("synth", "vocab_size") => s.vocab_size = parse(v, w)?,
            ("synth", "chenones_per_word") => s.chenones_per_word = parse_pair(v, w)?,
            ("synth", "frames_per_chenone") => s.frames_per_chenone = parse_pair(v, w)?,
            ("synth", "words_per_utt") => s.words_per_utt = parse_pair(v, w)?,
            ("synth", "mean_scale") => s.mean_scale = parse(v, w)?,
            ("synth", "noise_scale") => s.noise_scale = parse(v, w)?,
            ("synth", "lang_offset") => s.lang_offset = parse(v, w)?,
            ("synth", "accent_swap_rate") => s.accent_swap_rate = parse(v, w)?,
            ("synth", "successors") => s.successors = parse(v, w)?,
            ("data", "en_train") => d.en_train = parse(v, w)?,
            ("data", "hi_train") => d.hi_train = parse(v, w)?,
            ("data", "mix_train") => d.mix_train = parse(v, w)?,
            ("data", "en_test") => d.en_test = parse(v, w)?,
            ("data", "hi_test") => d.hi_test = parse(v, w)?,
            ("data", "mix_ratio_hi") => d.mix_ratio_hi = parse(v, w)?,
            ("data", "lm_sentences") => d.lm_sentences = parse(v, w)?,
            ("data", "lm_test_sentences") => d.lm_test_sentences = parse(v, w)?,
            ("data", "hi_text_en_rate") => d.hi_text_en_rate = parse(v, w)?,
            ("model", "feature_dim") => self.model.feature_dim = parse(v, w)?,
            ("model", "hidden_dim") => self.model.hidden_dim = parse(v, w)?,
            ("model", "num_shared_blocks") => self.model.num_shared_blocks = parse(v, w)?,
            ("model", "split_depth") => self.model.split_depth = parse(v, w)?,
            ("model", "lookahead") => self.model.lookahead = parse(v, w)?,
            ("distill", "w_kld") => self.distill.w_kld = parse(v, w)?,
            ("distill", "teacher_non_streaming") => self.distill.ensemble.non_streaming = parse(v, w)?,
            ("distill", "teacher_sha") => self.distill.ensemble.sha = parse(v, w)?,
            ("lm", "order") => self.lm.order = parse(v, w)?,
            ("lm", "smoothing") => {
                if v != "witten-bell" {
                    return Err(Error::Config(format!("{w}: only witten-bell is supported, got {v:?}")));
                }
            }
            ("lm", "lambda_en") => self.lm.lambda_en = parse(v, w)?,
            ("decode", "beam") => {
                self.decode.beam = if v == "inf" { None } else { Some(parse(v, w)?) };
            }
            ("decode", "acoustic_scale") => self.decode.acoustic_scale = parse(v, w)?,
            ("decode", "lm_scale") => self.decode.lm_scale = parse(v, w)?,
            ("decode", "insertion_penalty") => self.decode.insertion_penalty = parse(v, w)?,
            ("decode", "posterior_floor") => self.decode.posterior_floor = parse(v, w)?,
            ("analysis", "gmm_components") => self.analysis.gmm.k = parse(v, w)?,
            ("analysis", "gmm_restarts") => self.analysis.gmm.restarts = parse(v, w)?,
            ("analysis", "gmm_tol") => self.analysis.gmm.tol = parse(v, w)?,
            ("analysis", "gmm_max_iter") => self.analysis.gmm.max_iter = parse(v, w)?,
            ("analysis", "histogram_bins") => self.analysis.histogram_bins = parse(v, w)?,
            ("translit", "mode") => {
                self.translit.mode = match v {
                    "word" => TranslitMode::Word,
                    "contextual" => TranslitMode::Contextual,
                    _ => return Err(Error::Config(format!("{w}: expected word or contextual, got {v:?}"))),
                }
            }
            ("translit", "remote_url") => {
                self.translit.remote_url = (!v.is_empty()).then(|| v.to_string());
            }
            (sec, k) => {
                let stage: Stage = sec
                    .strip_prefix("stage.")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Config(format!("unknown section [{sec}]")))?;
                let p = self.stage_mut(stage);
                match k {
                    "epochs" => p.epochs = parse(v, w)?,
                    "batch_size" => p.batch_size = parse(v, w)?,
                    "learning_rate" => p.learning_rate = parse(v, w)?,
                    "data" => p.data = DataSelector::from_str(v).map_err(|e| Error::Config(format!("{w}: {e}")))?,
                    _ => return Err(Error::Config(format!("unknown key {k:?} in [{sec}]"))),
                }
            }
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let known = keys();
        let sections: BTreeSet<&str> = known.iter().map(|(s, _)| s.as_str()).collect();
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !sections.contains(name) {
                    return Err(Error::Config(format!("line {n}: unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {n}: expected 'key = value'")))?;
            let (k, v) = (k.trim(), v.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| Error::Config(format!("line {n}: key {k:?} outside any section")))?;
            if !known.iter().any(|(s, key)| s == sec && *key == k) {
                return Err(Error::Config(format!("line {n}: unknown key {k:?} in [{sec}]")));
            }
            if !seen.insert((sec.to_string(), k.to_string())) {
                return Err(Error::Config(format!("line {n}: [{sec}] {k} given twice")));
            }
            cfg.set(sec, k, v).map_err(|e| Error::Config(format!("line {n}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text with every key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = String::new();
        for (sec, key) in keys() {
            if sec != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{sec}]\n"));
                current = sec.clone();
            }
            out.push_str(&format!("{key} = {}\n", self.get(&sec, key)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.synth.validate().map_err(cfg)?;
        if self.model.feature_dim != self.synth.feature_dim {
            return Err(Error::Config(format!(
                "[model] feature_dim {} differs from [synth] feature_dim {}",
                self.model.feature_dim, self.synth.feature_dim
            )));
        }
        self.model_config().validate().map_err(cfg)?;
        for p in &self.stages {
            p.validate().map_err(cfg)?;
        }
        DistillConfig::new(self.distill.w_kld, self.distill.ensemble).map_err(cfg)?;
        EnsembleWeights::new(self.distill.ensemble.non_streaming, self.distill.ensemble.sha).map_err(cfg)?;
        if self.lm.order == 0 {
            return Err(Error::Config("[lm] order must be at least 1".into()));
        }
        if !(self.lm.lambda_en > 0.0 && self.lm.lambda_en < 1.0) {
            return Err(Error::Config("[lm] lambda_en must lie strictly inside (0, 1)".into()));
        }
        self.decode.validate().map_err(cfg)?;
        let d = &self.data;
        let sizes = [d.en_train, d.hi_train, d.mix_train, d.en_test, d.hi_test, d.lm_sentences, d.lm_test_sentences];
        if sizes.contains(&0) {
            return Err(Error::Config("[data] corpus sizes must be positive".into()));
        }
        let unit = |x: f64, open: bool| if open { x > 0.0 && x < 1.0 } else { (0.0..=1.0).contains(&x) };
        if !unit(d.mix_ratio_hi, true) || !unit(d.hi_text_en_rate, false) {
            return Err(Error::Config("[data] mix_ratio_hi must lie in (0, 1), hi_text_en_rate in [0, 1]".into()));
        }
        let g = &self.analysis.gmm;
        if g.k == 0 || g.restarts == 0 || g.max_iter == 0 || !(g.tol >= 0.0) || self.analysis.histogram_bins == 0 {
            return Err(Error::Config("[analysis] counts must be positive and gmm_tol non-negative".into()));
        }
        Ok(())
    }
}

//! Synthetic bilingual acoustic corpora.
//!
//! Both languages draw their frame labels from one chenone inventory. A
//! frame for chenone `c` spoken in language `l` is sampled around
//! `means[remap_l(c)] + offset_l`: the per-language offset shifts every
//! frame of a language, and `remap` (identity for English) lets Hindi
//! realise some chenones like different English ones, so the same acoustics
//! carry different labels depending on language.

mod io;
mod words;

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lang::{Lang, UttLang};
use crate::lexicon::Lexicon;
use crate::seed::{self, Rng as SeedRng};
use crate::tensor::Tensor;
use crate::translit::{TranslitProvider, TranslitTable};

pub use io::{parse_corpus, parse_utterance_line, read_corpus, render_utterance_line, write_corpus};

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub lang: UttLang,
    pub words: Vec<String>,
    /// `[T × feature_dim]`
    pub frames: Tensor,
    pub labels: Vec<usize>,
    pub frame_langs: Vec<Lang>,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self, num_chenones: Option<usize>) -> Result<()> {
        let t = self.frames.rows();
        if self.labels.len() != t || self.frame_langs.len() != t {
            return Err(Error::Data(format!(
                "utterance {}: {} frames, {} labels, {} language tags",
                self.id,
                t,
                self.labels.len(),
                self.frame_langs.len()
            )));
        }
        if let Some(k) = num_chenones {
            if let Some(c) = self.labels.iter().find(|&&c| c >= k) {
                return Err(Error::Data(format!("utterance {}: label {c} ≥ {k}", self.id)));
            }
        }
        Ok(())
    }
}

/// Bigram word generator over a vocabulary (indices).
#[derive(Debug, Clone, PartialEq)]
pub struct WordChain {
    pub start: Vec<f64>,
    /// Weighted successors per word; an empty list falls back to `start`.
    pub successors: Vec<Vec<(usize, f64)>>,
}

fn sample_weighted<R: Rng>(items: &[(usize, f64)], rng: &mut R) -> usize {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.gen::<f64>() * total;
    for &(i, w) in items {
        if u < w {
            return i;
        }
        u -= w;
    }
    items.last().expect("non-empty").0
}

impl WordChain {
    pub fn uniform(n: usize) -> Self {
        Self {
            start: vec![1.0; n],
            successors: vec![Vec::new(); n],
        }
    }

    pub fn sample<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let start: Vec<(usize, f64)> = self.start.iter().copied().enumerate().collect();
        let mut out: Vec<usize> = Vec::with_capacity(len);
        for _ in 0..len {
            let next = match out.last() {
                Some(&prev) if !self.successors[prev].is_empty() => {
                    sample_weighted(&self.successors[prev], rng)
                }
                _ => sample_weighted(&start, rng),
            };
            out.push(next);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangSpec {
    /// Source-script word forms.
    pub vocab: Vec<String>,
    pub lexicon: Lexicon,
    pub chain: WordChain,
    pub offset: Vec<f64>,
    /// Chenone → index of the emission mean it is realised with.
    pub remap: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_chenones: usize,
    pub feature_dim: usize,
    /// `[K][F]` emission means.
    pub means: Vec<Vec<f64>>,
    /// `[K][F]` per-dimension emission standard deviations.
    pub stds: Vec<Vec<f64>>,
    /// `[en, hi]`
    pub langs: [LangSpec; 2],
    /// Inclusive range of frames each chenone occupies.
    pub frames_per_chenone: (usize, usize),
    /// Inclusive range of words per utterance.
    pub words_per_utt: (usize, usize),
    pub noise_scale: f64,
}

/// Knobs for [`SynthSpec::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub num_chenones: usize,
    pub feature_dim: usize,
    pub vocab_size: usize,
    pub chenones_per_word: (usize, usize),
    pub frames_per_chenone: (usize, usize),
    pub words_per_utt: (usize, usize),
    pub mean_scale: f64,
    pub noise_scale: f64,
    /// Distance between the two language offsets.
    pub lang_offset: f64,
    /// Fraction of chenones Hindi realises with another chenone's mean.
    pub accent_swap_rate: f64,
    pub successors: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            num_chenones: 64,
            feature_dim: 16,
            vocab_size: 40,
            chenones_per_word: (2, 4),
            frames_per_chenone: (1, 3),
            words_per_utt: (2, 5),
            mean_scale: 1.0,
            noise_scale: 0.25,
            lang_offset: 1.5,
            accent_swap_rate: 0.2,
            successors: 4,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        if self.num_chenones < 2 || self.feature_dim == 0 || self.vocab_size == 0 {
            return bad("num_chenones ≥ 2, feature_dim ≥ 1 and vocab_size ≥ 1 required");
        }
        for (name, (lo, hi)) in [
            ("chenones_per_word", self.chenones_per_word),
            ("frames_per_chenone", self.frames_per_chenone),
            ("words_per_utt", self.words_per_utt),
        ] {
            if lo == 0 || lo > hi {
                return bad(&format!("{name} range ({lo}, {hi}) is invalid"));
            }
        }
        if !(self.mean_scale > 0.0 && self.noise_scale >= 0.0 && self.lang_offset >= 0.0) {
            return bad("scales must be non-negative (mean_scale positive)");
        }
        if !(0.0..=1.0).contains(&self.accent_swap_rate) {
            return bad("accent_swap_rate must lie in [0, 1]");
        }
        if self.vocab_size > words::ENGLISH.len() {
            return bad(&format!("vocab_size is capped at {}", words::ENGLISH.len()));
        }
        Ok(())
    }
}

fn gaussian_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn random_chain<R: Rng>(n: usize, successors: usize, rng: &mut R) -> WordChain {
    let start = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let idx: Vec<usize> = (0..n).collect();
    let successors = (0..n)
        .map(|_| {
            idx.choose_multiple(rng, successors.min(n))
                .map(|&j| (j, rng.gen_range(0.2..1.0)))
                .collect()
        })
        .collect();
    WordChain { start, successors }
}

impl SynthSpec {
    /// Generates a synthetic bilingual world plus the transliteration
    /// table for its Hindi (Devanagari) vocabulary.
    pub fn generate(p: &SynthParams, seed: u64) -> Result<(SynthSpec, TranslitTable)> {
        p.validate()?;
        let mut rng = seed::rng(seed, "synth.world");
        let k = p.num_chenones;
        let f = p.feature_dim;
        let means: Vec<Vec<f64>> = (0..k).map(|_| gaussian_vec(f, p.mean_scale, &mut rng)).collect();
        let stds: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..f).map(|_| rng.gen_range(0.75..1.25)).collect())
            .collect();

        let mut dir = gaussian_vec(f, 1.0, &mut rng);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|v| *v /= norm);
        let offset = |s: f64| dir.iter().map(|v| v * s * p.lang_offset / 2.0).collect::<Vec<_>>();

        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut hi_remap: Vec<usize> = (0..k).collect();
        let swaps = ((k as f64 * p.accent_swap_rate) / 2.0).round() as usize;
        for pair in order.chunks(2).take(swaps) {
            if let [a, b] = *pair {
                hi_remap.swap(a, b);
            }
        }

        let mut en_vocab: Vec<String> = words::ENGLISH.iter().map(|s| s.to_string()).collect();
        en_vocab.shuffle(&mut rng);
        en_vocab.truncate(p.vocab_size);
        let reserved: HashSet<String> = words::ENGLISH.iter().map(|s| s.to_string()).collect();
        let (hi_vocab, table) = words::devanagari_vocab(p.vocab_size, &reserved, &mut rng)?;

        let mut used: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut make_lexicon = |vocab: &[String], rng: &mut SeedRng| -> Result<Lexicon> {
            let mut lex = Lexicon::new();
            for w in vocab {
                let seq = loop {
                    let len = rng.gen_range(p.chenones_per_word.0..=p.chenones_per_word.1);
                    let seq: Vec<usize> = (0..len).map(|_| rng.gen_range(0..k)).collect();
                    if used.insert(seq.clone()) {
                        break seq;
                    }
                };
                lex.insert(w.clone(), seq)?;
            }
            Ok(lex)
        };
        let en_lex = make_lexicon(&en_vocab, &mut rng)?;
        let hi_lex = make_lexicon(&hi_vocab, &mut rng)?;
        let en_chain = random_chain(en_vocab.len(), p.successors, &mut rng);
        let hi_chain = random_chain(hi_vocab.len(), p.successors, &mut rng);

        let spec = SynthSpec {
            num_chenones: k,
            feature_dim: f,
            stds,
            langs: [
                LangSpec {
                    vocab: en_vocab,
                    lexicon: en_lex,
                    chain: en_chain,
                    offset: offset(1.0),
                    remap: (0..k).collect(),
                },
                LangSpec {
                    vocab: hi_vocab,
                    lexicon: hi_lex,
                    chain: hi_chain,
                    offset: offset(-1.0),
                    remap: hi_remap,
                },
            ],
            means,
            frames_per_chenone: p.frames_per_chenone,
            words_per_utt: p.words_per_utt,
            noise_scale: p.noise_scale,
        };
        spec.validate()?;
        Ok((spec, table))
    }

    pub fn lang(&self, l: Lang) -> &LangSpec {
        &self.langs[l.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_chenones;
        let f = self.feature_dim;
        if k == 0 || f == 0 {
            return Err(Error::Spec("empty chenone inventory or feature space".into()));
        }
        if self.means.len() != k || self.means.iter().any(|m| m.len() != f) {
            return Err(Error::Spec("means must be K × F".into()));
        }
        if self.stds.len() != k || self.stds.iter().flatten().any(|s| !(*s > 0.0)) {
            return Err(Error::Spec("emission deviations must be K × F and positive".into()));
        }
        let (flo, fhi) = self.frames_per_chenone;
        let (wlo, whi) = self.words_per_utt;
        if flo == 0 || flo > fhi || wlo == 0 || wlo > whi {
            return Err(Error::Spec("invalid duration ranges".into()));
        }
        for l in Lang::ALL {
            let ls = self.lang(l);
            if ls.offset.len() != f || ls.remap.len() != k || ls.remap.iter().any(|&r| r >= k) {
                return Err(Error::Spec(format!("{l}: offset or remap has the wrong size")));
            }
            if ls.chain.start.len() != ls.vocab.len() || ls.chain.successors.len() != ls.vocab.len() {
                return Err(Error::Spec(format!("{l}: word chain does not match vocabulary")));
            }
            if let Some(w) = ls.vocab.iter().find(|w| !ls.lexicon.contains(w)) {
                return Err(Error::Spec(format!("{l}: lexicon does not cover {w:?}")));
            }
            ls.lexicon
                .check_inventory(k)
                .map_err(|e| Error::Spec(e.to_string()))?;
        }
        Ok(())
    }

    fn emit<R: Rng>(&self, lang: Lang, chenone: usize, rng: &mut R) -> Vec<f64> {
        let ls = self.lang(lang);
        let mean = &self.means[ls.remap[chenone]];
        let std = &self.stds[ls.remap[chenone]];
        (0..self.feature_dim)
            .map(|d| {
                let noise: f64 = StandardNormal.sample(rng);
                let v = mean[d] + ls.offset[d] + self.noise_scale * std[d] * noise;
                // Stored corpora hold f32; quantise here so files round-trip exactly.
                v as f32 as f64
            })
            .collect()
    }

    fn render<R: Rng>(
        &self,
        id: String,
        lang: UttLang,
        words: &[(Lang, String)],
        rng: &mut R,
    ) -> Result<Utterance> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut frame_langs = Vec::new();
        for (l, w) in words {
            let seq = self
                .lang(*l)
                .lexicon
                .get(w)
                .ok_or_else(|| Error::Spec(format!("no pronunciation for {w:?}")))?;
            for &c in seq {
                let n = rng.gen_range(self.frames_per_chenone.0..=self.frames_per_chenone.1);
                for _ in 0..n {
                    rows.push(self.emit(*l, c, rng));
                    labels.push(c);
                    frame_langs.push(*l);
                }
            }
        }
        Ok(Utterance {
            id,
            lang,
            words: words.iter().map(|(_, w)| w.clone()).collect(),
            frames: Tensor::from_rows(&rows)?,
            labels,
            frame_langs,
        })
    }

    fn sample_words<R: Rng>(&self, lang: Lang, len: usize, rng: &mut R) -> Vec<(Lang, String)> {
        let ls = self.lang(lang);
        ls.chain
            .sample(len, rng)
            .into_iter()
            .map(|i| (lang, ls.vocab[i].clone()))
            .collect()
    }

    /// Word sequences from one language's generator, without acoustics.
    pub fn sentences(&self, lang: Lang, n: usize, seed: u64) -> Result<Vec<Vec<String>>> {
        if self.lang(lang).vocab.is_empty() {
            return Err(Error::Spec(format!("{lang} vocabulary is empty")));
        }
        let mut rng = seed::rng(seed, &format!("text/{lang}"));
        Ok((0..n)
            .map(|_| {
                let len = rng.gen_range(self.words_per_utt.0..=self.words_per_utt.1);
                self.sample_words(lang, len, &mut rng)
                    .into_iter()
                    .map(|(_, w)| w)
                    .collect()
            })
            .collect())
    }

    /// Sentences of `lang` where, with probability `insert_rate`, a run of
    /// words from the other language (as long as an ordinary sentence) is
    /// spliced in at a random position.
    pub fn codemixed_sentences(
        &self,
        lang: Lang,
        n: usize,
        insert_rate: f64,
        seed: u64,
    ) -> Result<Vec<Vec<String>>> {
        let mut base = self.sentences(lang, n, seed)?;
        let mut rng = seed::rng(seed, &format!("text-mix/{lang}"));
        for s in &mut base {
            if rng.gen::<f64>() < insert_rate {
                let len = rng.gen_range(self.words_per_utt.0..=self.words_per_utt.1);
                let run = self.sample_words(lang.other(), len, &mut rng);
                let at = rng.gen_range(0..=s.len());
                s.splice(at..at, run.into_iter().map(|(_, w)| w));
            }
        }
        Ok(base)
    }
}

/// Monolingual utterances. Deterministic in `(spec, lang, num_utts, seed)`;
/// each utterance has its own derived random stream.
pub fn synthesize_language(spec: &SynthSpec, lang: Lang, num_utts: usize, seed: u64) -> Result<Vec<Utterance>> {
    spec.validate()?;
    if num_utts == 0 {
        return Err(Error::Spec("num_utts must be positive".into()));
    }
    if spec.lang(lang).vocab.is_empty() {
        return Err(Error::Spec(format!("{lang} vocabulary is empty")));
    }
    (0..num_utts)
        .map(|i| {
            let mut rng = seed::rng(seed, &format!("utt/{lang}/{i}"));
            let len = rng.gen_range(spec.words_per_utt.0..=spec.words_per_utt.1);
            let words = spec.sample_words(lang, len, &mut rng);
            spec.render(format!("{lang}-{i:05}"), lang.into(), &words, &mut rng)
        })
        .collect()
}

/// Code-mixed utterances built from alternating language segments; each
/// segment is Hindi with probability `ratio_hi`.
pub fn synthesize_codemix(spec: &SynthSpec, ratio_hi: f64, num_utts: usize, seed: u64) -> Result<Vec<Utterance>> {
    spec.validate()?;
    if !(ratio_hi > 0.0 && ratio_hi < 1.0) {
        return Err(Error::Spec(format!("ratio_hi {ratio_hi} must lie in (0, 1)")));
    }
    if num_utts == 0 {
        return Err(Error::Spec("num_utts must be positive".into()));
    }
    if Lang::ALL.iter().any(|&l| spec.lang(l).vocab.is_empty()) {
        return Err(Error::Spec("code-mixing needs both vocabularies".into()));
    }
    (0..num_utts)
        .map(|i| {
            let mut rng = seed::rng(seed, &format!("utt/mix/{i}"));
            let segments = rng.gen_range(2..=4);
            let mut words = Vec::new();
            for _ in 0..segments {
                let lang = if rng.gen::<f64>() < ratio_hi { Lang::Hi } else { Lang::En };
                let len = rng.gen_range(1..=3);
                words.extend(spec.sample_words(lang, len, &mut rng));
            }
            spec.render(format!("mix-{i:05}"), UttLang::Mix, &words, &mut rng)
        })
        .collect()
}

/// Rekeys a source-script lexicon by Latin transliteration. Chenone
/// sequences are untouched.
pub fn transliterate_lexicon(hi_lexicon: &Lexicon, provider: &TranslitProvider) -> Result<Lexicon> {
    let words: Vec<String> = hi_lexicon.words().map(str::to_string).collect();
    let latin = provider.transliterate_words(&words)?;
    let missing: Vec<&str> = words
        .iter()
        .zip(&latin)
        .filter(|(_, l)| l.is_none())
        .map(|(w, _)| w.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(format!("no transliteration for {}", missing.join(" "))));
    }
    let mut out = Lexicon::new();
    for (src, l) in words.iter().zip(latin) {
        let l = l.expect("checked above");
        if out.contains(&l) {
            return Err(Error::Coverage(format!("{src:?} collides with another word on {l:?}")));
        }
        out.insert(l, hi_lexicon.get(src).expect("word from lexicon").to_vec())?;
    }
    Ok(out)
}

/// Maps every word through `table`, leaving unknown words as they are.
pub fn transliterate_words(words: &[String], table: &TranslitTable) -> Vec<String> {
    words
        .iter()
        .map(|w| table.lookup(w).map_or_else(|| w.clone(), str::to_string))
        .collect()
}

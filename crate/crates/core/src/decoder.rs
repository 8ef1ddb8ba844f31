//! Token-passing decoder over a word → chenone lexicon, and WER scoring.
//!
//! A hypothesis sits on one chenone of one word. Each frame it either stays
//! (self-loop) or advances to the next chenone; after a word's last chenone
//! it may enter any word. Entering a word pays `β·ln p_LM(word | history)`
//! plus the insertion penalty up front, so hypotheses inside different
//! words compete on comparable scores.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use rayon::prelude::*;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::lexicon::Lexicon;
use crate::lm::{LanguageModel, BOS, EOS};
use crate::model::{AcousticModel, HeadMode, Posteriors};
use crate::tensor::Tensor;

/// Floor applied before taking logs of LM probabilities, and the lowest
/// allowed acoustic floor.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Hypotheses kept per frame; `None` disables pruning.
    pub beam: Option<usize>,
    pub acoustic_scale: f64,
    pub lm_scale: f64,
    pub insertion_penalty: f64,
    /// Posteriors below this are raised to it before taking logs, which
    /// bounds the cost a single mismatched frame can add to a path.
    pub posterior_floor: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: Some(16),
            acoustic_scale: 1.0,
            lm_scale: 0.5,
            insertion_penalty: 0.0,
            posterior_floor: 1e-3,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == Some(0) {
            return Err(Error::Parameter("beam must be at least 1".into()));
        }
        if !(self.acoustic_scale >= 0.0 && self.lm_scale >= 0.0) || !self.insertion_penalty.is_finite() {
            return Err(Error::Parameter("decoder scales must be non-negative and finite".into()));
        }
        if !(self.posterior_floor > 0.0 && self.posterior_floor < 1.0) {
            return Err(Error::Parameter("posterior floor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub words: Vec<String>,
    /// Total log score; `-inf` when no word sequence fits the frames.
    pub score: f64,
}

struct History {
    word: usize,
    prev: Option<Rc<History>>,
}

fn unwind(mut h: Option<&Rc<History>>) -> Vec<usize> {
    let mut out = Vec::new();
    while let Some(node) = h {
        out.push(node.word);
        h = node.prev.as_ref();
    }
    out.reverse();
    out
}

#[derive(Clone)]
struct Token {
    word: usize,
    pos: usize,
    /// LM context preceding `word`, as word indices; `usize::MAX` stands
    /// for `<s>`.
    ctx: Vec<usize>,
    history: Option<Rc<History>>,
    score: f64,
}

struct LmCache<'a> {
    lm: &'a dyn LanguageModel,
    words: &'a [String],
    keep: usize,
    memo: HashMap<(Vec<usize>, usize), f64>,
}

impl LmCache<'_> {
    /// `ln p(word | ctx)`; `word == usize::MAX` queries `</s>`.
    fn ln_prob(&mut self, ctx: &[usize], word: usize) -> f64 {
        if let Some(&v) = self.memo.get(&(ctx.to_vec(), word)) {
            return v;
        }
        let names: Vec<&str> = ctx
            .iter()
            .map(|&i| if i == usize::MAX { BOS } else { self.words[i].as_str() })
            .collect();
        let w = if word == usize::MAX { EOS } else { self.words[word].as_str() };
        let v = self.lm.prob(&names, w).max(PROB_FLOOR).ln();
        self.memo.insert((ctx.to_vec(), word), v);
        v
    }

    fn extend(&self, ctx: &[usize], word: usize) -> Vec<usize> {
        let mut next = ctx.to_vec();
        next.push(word);
        let drop = next.len().saturating_sub(self.keep);
        next.drain(..drop);
        next
    }
}

/// Best complete word sequence for `post`.
///
/// With a finite beam the search is repeated at widths 1, 2, 4, … below
/// the requested one and at the requested width itself, keeping the best
/// complete hypothesis of any pass. Histogram pruning alone can let a wider
/// beam crowd out the path a narrower one followed; the widening passes
/// make the result non-decreasing along that ladder at about twice the cost
/// of a single pass.
pub fn decode(
    post: &Posteriors,
    lexicon: &Lexicon,
    lm: &dyn LanguageModel,
    cfg: &DecodeConfig,
) -> Result<Decoded> {
    cfg.validate()?;
    if lexicon.is_empty() {
        return Err(Error::Inventory("lexicon has no words".into()));
    }
    lexicon.check_inventory(post.num_chenones())?;
    let words: Vec<String> = lexicon.words().map(str::to_string).collect();
    let prons: Vec<&[usize]> = words.iter().map(|w| lexicon.get(w).expect("listed word")).collect();
    let mut lmc = LmCache {
        lm,
        words: &words,
        keep: lm.order().saturating_sub(1),
        memo: HashMap::new(),
    };
    let widths: Vec<Option<usize>> = match cfg.beam {
        None => vec![None],
        Some(b) => {
            let mut w: Vec<Option<usize>> =
                std::iter::successors(Some(1usize), |&x| x.checked_mul(2)).take_while(|&x| x < b).map(Some).collect();
            w.push(Some(b));
            w
        }
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for beam in widths {
        if let Some((score, seq)) = search(post, &prons, &mut lmc, cfg, beam) {
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, seq));
            }
        }
    }
    Ok(match best {
        Some((score, seq)) => Decoded {
            words: seq.into_iter().map(|i| words[i].clone()).collect(),
            score,
        },
        None => Decoded {
            words: Vec::new(),
            score: f64::NEG_INFINITY,
        },
    })
}

fn search(
    post: &Posteriors,
    prons: &[&[usize]],
    lmc: &mut LmCache,
    cfg: &DecodeConfig,
    beam: Option<usize>,
) -> Option<(f64, Vec<usize>)> {
    let floor = cfg.posterior_floor.max(PROB_FLOOR);
    let ac = |t: usize, c: usize| cfg.acoustic_scale * post.row(t)[c].max(floor).ln();
    let start_ctx = lmc.extend(&[], usize::MAX);

    let mut active: Vec<Token> = (0..prons.len())
        .map(|w| Token {
            word: w,
            pos: 0,
            ctx: start_ctx.clone(),
            history: None,
            score: cfg.lm_scale * lmc.ln_prob(&start_ctx, w) + cfg.insertion_penalty + ac(0, prons[w][0]),
        })
        .collect();
    let frames = post.frames();
    // A token that cannot reach its word's last chenone by the final frame
    // can never complete, so it must not occupy a beam slot.
    let alive = |tok: &Token, t: usize| prons[tok.word].len() - 1 - tok.pos <= frames - 1 - t;
    active.retain(|tok| alive(tok, 0));
    prune(&mut active, beam);

    for t in 1..frames {
        let mut next: Vec<Token> = Vec::new();
        let mut slot: HashMap<(usize, usize, Vec<usize>), usize> = HashMap::new();
        let mut offer = |tok: Token, next: &mut Vec<Token>| {
            let key = (tok.word, tok.pos, tok.ctx.clone());
            match slot.get(&key) {
                Some(&i) if next[i].score >= tok.score => {}
                Some(&i) => next[i] = tok,
                None => {
                    slot.insert(key, next.len());
                    next.push(tok);
                }
            }
        };
        for tok in &active {
            let pron = prons[tok.word];
            let mut stay = tok.clone();
            stay.score += ac(t, pron[tok.pos]);
            offer(stay, &mut next);
            if tok.pos + 1 < pron.len() {
                let mut adv = tok.clone();
                adv.pos += 1;
                adv.score += ac(t, pron[adv.pos]);
                offer(adv, &mut next);
            } else {
                let ctx = lmc.extend(&tok.ctx, tok.word);
                let history = Some(Rc::new(History {
                    word: tok.word,
                    prev: tok.history.clone(),
                }));
                for (w, pron) in prons.iter().enumerate() {
                    offer(
                        Token {
                            word: w,
                            pos: 0,
                            ctx: ctx.clone(),
                            history: history.clone(),
                            score: tok.score
                                + cfg.lm_scale * lmc.ln_prob(&ctx, w)
                                + cfg.insertion_penalty
                                + ac(t, pron[0]),
                        },
                        &mut next,
                    );
                }
            }
        }
        next.retain(|tok| alive(tok, t));
        prune(&mut next, beam);
        active = next;
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for tok in &active {
        if tok.pos + 1 != prons[tok.word].len() {
            continue;
        }
        let ctx = lmc.extend(&tok.ctx, tok.word);
        let score = tok.score + cfg.lm_scale * lmc.ln_prob(&ctx, usize::MAX);
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            let mut seq = unwind(tok.history.as_ref());
            seq.push(tok.word);
            best = Some((score, seq));
        }
    }
    best
}

fn prune(tokens: &mut Vec<Token>, beam: Option<usize>) {
    if let Some(b) = beam {
        if tokens.len() > b {
            // Stable sort keeps insertion order among equal scores.
            tokens.sort_by(|a, b| b.score.total_cmp(&a.score));
            tokens.truncate(b);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WerCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl WerCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn wer(&self) -> f64 {
        100.0 * self.errors() as f64 / self.ref_words as f64
    }

    pub fn add(&mut self, other: &WerCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_words += other.ref_words;
    }
}

/// Unit-cost Levenshtein alignment. Among minimum-cost alignments the one
/// with the most substitutions is reported, which makes the counts
/// symmetric under swapping reference and hypothesis.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> Result<WerCounts> {
    if reference.is_empty() {
        return Err(Error::Data("WER needs a non-empty reference".into()));
    }
    let (n, m) = (reference.len(), hypothesis.len());
    // (cost, insertions + deletions, substitutions, deletions, insertions)
    type Cell = (usize, usize, usize, usize, usize);
    let mut dp: Vec<Vec<Cell>> = vec![vec![(0, 0, 0, 0, 0); m + 1]; n + 1];
    for i in 1..=n {
        dp[i][0] = (i, i, 0, i, 0);
    }
    for j in 1..=m {
        dp[0][j] = (j, j, 0, 0, j);
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let d = dp[i - 1][j - 1];
            let diag = if same { d } else { (d.0 + 1, d.1, d.2 + 1, d.3, d.4) };
            let u = dp[i - 1][j];
            let del = (u.0 + 1, u.1 + 1, u.2, u.3 + 1, u.4);
            let l = dp[i][j - 1];
            let ins = (l.0 + 1, l.1 + 1, l.2, l.3, l.4 + 1);
            dp[i][j] = [diag, del, ins]
                .into_iter()
                .min_by_key(|c| (c.0, c.1))
                .expect("three candidates");
        }
    }
    let (_, _, s, d, i) = dp[n][m];
    Ok(WerCounts {
        substitutions: s,
        deletions: d,
        insertions: i,
        ref_words: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Single,
    Sha,
    Head(Lang),
    /// One-hot posteriors on the reference labels; the model is unused.
    Oracle,
}

impl EvalMode {
    fn head_mode(self) -> Option<HeadMode> {
        match self {
            EvalMode::Single => Some(HeadMode::Single),
            EvalMode::Sha => Some(HeadMode::Sha),
            EvalMode::Head(l) => Some(HeadMode::Head(l)),
            EvalMode::Oracle => None,
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "sha" => Ok(Self::Sha),
            "head-en" => Ok(Self::Head(Lang::En)),
            "head-hi" => Ok(Self::Head(Lang::Hi)),
            "oracle" => Ok(Self::Oracle),
            _ => Err(Error::Parameter(format!(
                "unknown mode {s:?} (single, sha, head-en, head-hi, oracle)"
            ))),
        }
    }
}

pub fn oracle_posteriors(utt: &Utterance, num_chenones: usize) -> Result<Posteriors> {
    utt.validate(Some(num_chenones))?;
    let mut t = Tensor::zeros(&[utt.num_frames(), num_chenones]);
    for (f, &c) in utt.labels.iter().enumerate() {
        t.row_mut(f)[c] = 1.0;
    }
    Posteriors::new(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WerRow {
    pub system: String,
    pub testset: String,
    pub counts: WerCounts,
    pub utts: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WerReport {
    pub rows: Vec<WerRow>,
}

pub const WER_CSV_HEADER: &str = "system,testset,wer,sub,del,ins,utts";

impl WerReport {
    pub fn get(&self, system: &str, testset: &str) -> Option<&WerRow> {
        self.rows.iter().find(|r| r.system == system && r.testset == testset)
    }

    pub fn extend(&mut self, other: WerReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{WER_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.4},{},{},{},{}",
                r.system,
                r.testset,
                r.counts.wer(),
                r.counts.substitutions,
                r.counts.deletions,
                r.counts.insertions,
                r.utts
            );
        }
        out
    }
}

/// Decodes every utterance (in parallel) and aggregates WER per
/// utterance-language tag, in the order tags first appear.
pub fn evaluate_testset(
    system: &str,
    model: Option<&AcousticModel>,
    mode: EvalMode,
    corpus: &[Utterance],
    lexicon: &Lexicon,
    lm: &dyn LanguageModel,
    cfg: &DecodeConfig,
) -> Result<WerReport> {
    let oracle_k = match model {
        Some(m) => m.config.num_chenones,
        None => {
            let lex_max = lexicon.iter().flat_map(|(_, p)| p.iter().copied()).max();
            let label_max = corpus.iter().flat_map(|u| u.labels.iter().copied()).max();
            lex_max.max(label_max).map_or(1, |c| c + 1)
        }
    };
    let per_utt: Vec<WerCounts> = corpus
        .par_iter()
        .map(|u| {
            let post = match (mode.head_mode(), model) {
                (None, _) => oracle_posteriors(u, oracle_k)?,
                (Some(hm), Some(m)) => m.posteriors(&u.frames, hm)?,
                (Some(_), None) => return Err(Error::Parameter("this mode needs an acoustic model".into())),
            };
            let hyp = decode(&post, lexicon, lm, cfg)?;
            wer(&u.words, &hyp.words)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<WerRow> = Vec::new();
    for (u, c) in corpus.iter().zip(&per_utt) {
        let tag = u.lang.to_string();
        match rows.iter_mut().find(|r| r.testset == tag) {
            Some(r) => {
                r.counts.add(c);
                r.utts += 1;
            }
            None => rows.push(WerRow {
                system: system.to_string(),
                testset: tag,
                counts: *c,
                utts: 1,
            }),
        }
    }
    Ok(WerReport { rows })
}

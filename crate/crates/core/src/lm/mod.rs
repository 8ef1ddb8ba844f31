//! Back-off n-gram language models.

mod arpa;
mod counts;
mod interp;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use arpa::{export_arpa, import_arpa, parse_arpa, render_arpa};
pub use counts::{count_ngrams, tokenize, NGramCounts, BOS, EOS, UNK};
pub use interp::{InterpDescriptor, InterpolatedLM, LAMBDA_EN};

/// Query interface shared by plain and interpolated models.
pub trait LanguageModel: Send + Sync {
    fn order(&self) -> usize;

    /// Every token the model can predict: the vocabulary without `<s>`.
    fn predictable(&self) -> Vec<String>;

    /// `p(word | context)`; only the last `order - 1` context tokens
    /// matter and out-of-vocabulary tokens are treated as `<unk>`.
    fn prob(&self, context: &[&str], word: &str) -> f64;

    fn contains(&self, word: &str) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    WittenBell,
    /// Loaded from a file; the estimation method is unknown.
    Imported,
}

/// Back-off model in ARPA semantics: an explicit n-gram probability if one
/// is stored, otherwise the context's back-off weight times the
/// lower-order probability.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    smoothing: Smoothing,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    probs: HashMap<Vec<u32>, f64>,
    backoffs: HashMap<Vec<u32>, f64>,
}

impl NGramModel {
    fn empty(order: usize, smoothing: Smoothing) -> Self {
        Self {
            order,
            smoothing,
            vocab: Vec::new(),
            index: HashMap::new(),
            probs: HashMap::new(),
            backoffs: HashMap::new(),
        }
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&i) = self.index.get(w) {
            return i;
        }
        let i = self.vocab.len() as u32;
        self.vocab.push(w.to_string());
        self.index.insert(w.to_string(), i);
        i
    }

    fn ids(&mut self, gram: &[String]) -> Vec<u32> {
        gram.iter().map(|w| self.intern(w)).collect()
    }

    /// Witten-Bell estimation. The unigram level interpolates with a
    /// uniform distribution over the predictable vocabulary, so `<unk>`
    /// always keeps some mass.
    pub fn estimate(counts: &NGramCounts) -> Result<Self> {
        let mut m = Self::empty(counts.order(), Smoothing::WittenBell);
        m.intern(BOS);
        for g in counts.grams(1).keys() {
            m.intern(&g[0]);
        }
        m.intern(EOS);
        m.intern(UNK);
        let bos = m.index[BOS];

        let seen: Vec<(u32, u64)> = counts
            .grams(1)
            .iter()
            .filter(|(g, _)| g[0] != BOS)
            .map(|(g, &c)| (m.index[&g[0]], c))
            .collect();
        let total: u64 = seen.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::Data("cannot estimate a language model from zero counts".into()));
        }
        let types = seen.len() as f64;
        let denom = total as f64 + types;
        let uniform = 1.0 / (m.vocab.len() - 1) as f64;
        let mut counts1: HashMap<u32, u64> = seen.into_iter().collect();
        for id in 0..m.vocab.len() as u32 {
            let p = if id == bos {
                0.0
            } else {
                (counts1.remove(&id).unwrap_or(0) as f64 + types * uniform) / denom
            };
            m.probs.insert(vec![id], p);
        }

        for k in 2..=counts.order() {
            let mut by_history: Vec<(Vec<u32>, Vec<(u32, u64)>)> = Vec::new();
            for (g, &c) in counts.grams(k) {
                let ids = m.ids(g);
                let (h, w) = ids.split_at(k - 1);
                match by_history.last_mut() {
                    Some((last, items)) if last.as_slice() == h => items.push((w[0], c)),
                    _ => by_history.push((h.to_vec(), vec![(w[0], c)])),
                }
            }
            let mut level = Vec::new();
            for (h, items) in by_history {
                let c_h: u64 = items.iter().map(|(_, c)| c).sum();
                let t_h = items.len() as f64;
                let denom = c_h as f64 + t_h;
                for (w, c) in items {
                    let lower = m.prob_ids(&h[1..], w);
                    let mut key = h.clone();
                    key.push(w);
                    level.push((key, (c as f64 + t_h * lower) / denom));
                }
                m.backoffs.insert(h, t_h / denom);
            }
            m.probs.extend(level);
        }
        Ok(m)
    }

    pub fn from_sentences<S: AsRef<str> + Sync>(sentences: &[Vec<S>], order: usize) -> Result<Self> {
        Self::estimate(&count_ngrams(sentences, order)?)
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// All histories with a stored back-off weight, plus the empty one.
    pub fn contexts(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .backoffs
            .keys()
            .map(|h| h.iter().map(|&i| self.vocab[i as usize].clone()).collect())
            .collect();
        out.push(Vec::new());
        out.sort();
        out
    }

    fn id_or_unk(&self, w: &str) -> Option<u32> {
        self.index.get(w).or_else(|| self.index.get(UNK)).copied()
    }

    fn prob_ids(&self, context: &[u32], w: u32) -> f64 {
        let keep = context.len().min(self.order - 1);
        let mut h = &context[context.len() - keep..];
        let mut scale = 1.0;
        let mut key = Vec::with_capacity(h.len() + 1);
        loop {
            key.clear();
            key.extend_from_slice(h);
            key.push(w);
            if let Some(p) = self.probs.get(&key) {
                return scale * p;
            }
            if h.is_empty() {
                return 0.0;
            }
            scale *= self.backoffs.get(h).copied().unwrap_or(1.0);
            h = &h[1..];
        }
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (Vec<&str>, f64, Option<f64>)> {
        self.probs.iter().map(|(k, &p)| {
            (
                k.iter().map(|&i| self.vocab[i as usize].as_str()).collect(),
                p,
                self.backoffs.get(k).copied(),
            )
        })
    }
}

impl LanguageModel for NGramModel {
    fn order(&self) -> usize {
        self.order
    }

    fn predictable(&self) -> Vec<String> {
        self.vocab.iter().filter(|w| *w != BOS).cloned().collect()
    }

    fn prob(&self, context: &[&str], word: &str) -> f64 {
        let Some(w) = self.id_or_unk(word) else {
            return 0.0;
        };
        let tail = &context[context.len().saturating_sub(self.order - 1)..];
        let mut ctx = Vec::with_capacity(tail.len());
        for c in tail {
            match self.id_or_unk(c) {
                Some(i) => ctx.push(i),
                None => ctx.clear(),
            }
        }
        self.prob_ids(&ctx, w)
    }

    fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// `exp(-mean ln p)` over every word and each sentence's `</s>`.
pub fn perplexity<S: AsRef<str>>(lm: &dyn LanguageModel, sentences: &[Vec<S>]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in sentences.iter().filter(|s| !s.is_empty()) {
        let mut ctx: Vec<&str> = vec![BOS];
        for w in s.iter().map(AsRef::as_ref).chain(std::iter::once(EOS)) {
            let p = lm.prob(&ctx, w);
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Model(format!("token {w:?} has probability {p}")));
            }
            total += p.ln();
            n += 1;
            ctx.push(w);
        }
    }
    if n == 0 {
        return Err(Error::Data("perplexity needs a non-empty test corpus".into()));
    }
    Ok((-total / n as f64).exp())
}

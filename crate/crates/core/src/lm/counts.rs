use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Whitespace tokenisation with lowercasing.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_lowercase).collect()
}

/// Exact k-gram counts for every k up to `order`. Each sentence is padded
/// with one `<s>` and one `</s>`; empty sentences contribute nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts {
    order: usize,
    /// `counts[k - 1]` holds the k-grams.
    counts: Vec<BTreeMap<Vec<String>, u64>>,
}

impl NGramCounts {
    pub fn new(order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::Parameter("n-gram order must be at least 1".into()));
        }
        Ok(Self {
            order,
            counts: vec![BTreeMap::new(); order],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_empty(&self) -> bool {
        self.counts[0].is_empty()
    }

    pub fn add_sentence<S: AsRef<str>>(&mut self, sentence: &[S]) {
        if sentence.is_empty() {
            return;
        }
        let mut padded = Vec::with_capacity(sentence.len() + 2);
        padded.push(BOS.to_string());
        padded.extend(sentence.iter().map(|w| w.as_ref().to_string()));
        padded.push(EOS.to_string());
        for k in 1..=self.order {
            for gram in padded.windows(k) {
                *self.counts[k - 1].entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
    }

    /// Adds another table's counts. Commutative and associative.
    pub fn merge(&mut self, other: &NGramCounts) -> Result<()> {
        if other.order != self.order {
            return Err(Error::Parameter(format!(
                "cannot merge order-{} counts into order-{}",
                other.order, self.order
            )));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (g, c) in theirs {
                *mine.entry(g.clone()).or_insert(0) += c;
            }
        }
        Ok(())
    }

    /// Count of one k-gram (0 when unseen or longer than the order).
    pub fn get<S: AsRef<str>>(&self, gram: &[S]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        let key: Vec<String> = gram.iter().map(|w| w.as_ref().to_string()).collect();
        self.counts[gram.len() - 1].get(&key).copied().unwrap_or(0)
    }

    pub fn grams(&self, k: usize) -> &BTreeMap<Vec<String>, u64> {
        &self.counts[k - 1]
    }
}

pub fn count_ngrams<S: AsRef<str> + Sync>(corpus: &[Vec<S>], order: usize) -> Result<NGramCounts> {
    let empty = NGramCounts::new(order)?;
    Ok(corpus
        .par_chunks(256)
        .map(|chunk| {
            let mut c = empty.clone();
            for s in chunk {
                c.add_sentence(s);
            }
            c
        })
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b).expect("shards share one order");
                a
            },
        ))
}

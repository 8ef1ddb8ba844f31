use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Word → chenone sequence. Every sequence is non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, chenones: Vec<usize>) -> Result<()> {
        let word = word.into();
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!("invalid lexicon word {word:?}")));
        }
        if chenones.is_empty() {
            return Err(Error::Data(format!("empty chenone sequence for {word:?}")));
        }
        self.entries.insert(word, chenones);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[usize]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.entries.iter().map(|(w, s)| (w.as_str(), s.as_slice()))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails unless every chenone is below `num_chenones`.
    pub fn check_inventory(&self, num_chenones: usize) -> Result<()> {
        for (w, seq) in &self.entries {
            if let Some(c) = seq.iter().find(|&&c| c >= num_chenones) {
                return Err(Error::Inventory(format!(
                    "word {w:?} uses chenone {c} but the inventory has {num_chenones}"
                )));
            }
        }
        Ok(())
    }

    /// Union of two lexicons; a word present in both must agree.
    pub fn merged(&self, other: &Lexicon) -> Result<Lexicon> {
        let mut out = self.clone();
        for (w, seq) in &other.entries {
            match out.entries.get(w) {
                Some(existing) if existing != seq => {
                    return Err(Error::Data(format!("conflicting pronunciations for {w:?}")))
                }
                _ => {
                    out.entries.insert(w.clone(), seq.clone());
                }
            }
        }
        Ok(out)
    }

    /// `word TAB c,c,...` per line; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (word, seq) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected `word<TAB>chenones`"))?;
            let chenones = seq
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::parse(line_no, format!("chenone {c:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if lex.contains(word) {
                return Err(Error::parse(line_no, format!("duplicate word {word:?}")));
            }
            lex.insert(word, chenones)
                .map_err(|e| Error::parse(line_no, e))?;
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, seq) in &self.entries {
            let seq: Vec<String> = seq.iter().map(usize::to_string).collect();
            writeln!(out, "{w}\t{}", seq.join(",")).unwrap();
        }
        out
    }
}

impl FromIterator<(String, Vec<usize>)> for Lexicon {
    fn from_iter<I: IntoIterator<Item = (String, Vec<usize>)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

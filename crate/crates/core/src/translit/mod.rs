//! Source-script → Latin transliteration.
//!
//! Two local providers share one [`TranslitTable`]: word-based lookup
//! replaces each token independently, and the rule-based contextual
//! provider lets per-word rules pick a different Latin form from the
//! neighbouring tokens. The remote provider sends whole sentences to an
//! HTTP service (see [`remote`]).

pub mod remote;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use remote::{HttpTransport, RemoteClient, RemoteConfig, Transport, TransportError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    /// Previous token, in source or transliterated form.
    Prev(String),
    /// Next token, in source or table-transliterated form.
    Next(String),
    Default,
}

impl Predicate {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "default" {
            return Ok(Predicate::Default);
        }
        let (kind, tok) = s
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("bad predicate {s:?}")))?;
        if tok.is_empty() {
            return Err(Error::Data(format!("empty token in predicate {s:?}")));
        }
        match kind {
            "prev" => Ok(Predicate::Prev(tok.to_string())),
            "next" => Ok(Predicate::Next(tok.to_string())),
            _ => Err(Error::Data(format!("bad predicate {s:?}"))),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Predicate::Prev(t) => format!("prev={t}"),
            Predicate::Next(t) => format!("next={t}"),
            Predicate::Default => "default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextRule {
    pub source: String,
    pub latin: String,
    pub predicate: Predicate,
}

/// Word lookup table plus optional context rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslitTable {
    words: BTreeMap<String, String>,
    rules: Vec<ContextRule>,
}

/// Output sentence plus the source tokens that had no mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transliteration {
    pub text: String,
    pub misses: Vec<String>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl TranslitTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, latin: impl Into<String>) -> Result<()> {
        let (source, latin) = (source.into(), latin.into());
        if !valid_token(&source) || !valid_token(&latin) {
            return Err(Error::Data(format!("invalid table entry {source:?} → {latin:?}")));
        }
        self.words.insert(source, latin);
        Ok(())
    }

    /// Rules may only refine words that already have a table entry.
    pub fn add_rule(&mut self, rule: ContextRule) -> Result<()> {
        if !valid_token(&rule.latin) {
            return Err(Error::Data(format!("invalid rule output {:?}", rule.latin)));
        }
        if !self.words.contains_key(&rule.source) {
            return Err(Error::Data(format!("rule for {:?} has no table entry", rule.source)));
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn lookup(&self, source: &str) -> Option<&str> {
        self.words.get(source).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn rules(&self) -> &[ContextRule] {
        &self.rules
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.words.iter().map(|(s, l)| (s.as_str(), l.as_str()))
    }

    /// Parses `source TAB latin` lines.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut t = TranslitTable::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(i + 1, "expected `source<TAB>latin`"));
            }
            t.insert(fields[0], fields[1]).map_err(|e| Error::parse(i + 1, e))?;
        }
        Ok(t)
    }

    /// Parses `source TAB latin TAB predicate` lines into this table.
    pub fn parse_rules(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(i + 1, "expected `source<TAB>latin<TAB>predicate`"));
            }
            let rule = ContextRule {
                source: fields[0].to_string(),
                latin: fields[1].to_string(),
                predicate: Predicate::parse(fields[2]).map_err(|e| Error::parse(i + 1, e))?,
            };
            self.add_rule(rule).map_err(|e| Error::parse(i + 1, e))?;
        }
        Ok(())
    }

    pub fn table_tsv(&self) -> String {
        let mut out = String::new();
        for (s, l) in &self.words {
            writeln!(out, "{s}\t{l}").unwrap();
        }
        out
    }

    pub fn rules_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            writeln!(out, "{}\t{}\t{}", r.source, r.latin, r.predicate.render()).unwrap();
        }
        out
    }

    fn contextual_form(&self, tokens: &[&str], out: &[String], i: usize) -> Option<String> {
        let word = tokens[i];
        let prev_src = i.checked_sub(1).map(|j| tokens[j]);
        let prev_out = i.checked_sub(1).map(|j| out[j].as_str());
        let next_src = tokens.get(i + 1).copied();
        let next_tab = next_src.and_then(|n| self.lookup(n));
        let mut fallback = None;
        for r in self.rules.iter().filter(|r| r.source == word) {
            let hit = match &r.predicate {
                Predicate::Prev(t) => prev_src == Some(t) || prev_out == Some(t),
                Predicate::Next(t) => next_src == Some(t) || next_tab == Some(t),
                Predicate::Default => {
                    fallback.get_or_insert(r.latin.clone());
                    false
                }
            };
            if hit {
                return Some(r.latin.clone());
            }
        }
        fallback.or_else(|| self.lookup(word).map(str::to_string))
    }
}

/// Replaces each token through the table; unknown tokens pass through
/// unchanged and are reported.
pub fn transliterate_word_based(sentence: &str, table: &TranslitTable) -> Transliteration {
    let mut misses = Vec::new();
    let out: Vec<&str> = sentence
        .split_whitespace()
        .map(|tok| match table.lookup(tok) {
            Some(l) => l,
            None => {
                misses.push(tok.to_string());
                tok
            }
        })
        .collect();
    Transliteration {
        text: out.join(" "),
        misses,
    }
}

fn transliterate_with_rules(sentence: &str, table: &TranslitTable) -> Transliteration {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut misses = Vec::new();
    for i in 0..tokens.len() {
        match table.contextual_form(&tokens, &out, i) {
            Some(l) => out.push(l),
            None => {
                misses.push(tokens[i].to_string());
                out.push(tokens[i].to_string());
            }
        }
    }
    Transliteration {
        text: out.join(" "),
        misses,
    }
}

#[derive(Debug)]
pub enum TranslitProvider {
    WordTable(TranslitTable),
    ContextualRules(TranslitTable),
    Remote(RemoteClient),
}

impl TranslitProvider {
    /// Transliterates isolated words; `None` marks an uncovered word.
    pub fn transliterate_words(&self, words: &[String]) -> Result<Vec<Option<String>>> {
        match self {
            TranslitProvider::WordTable(t) | TranslitProvider::ContextualRules(t) => {
                Ok(words.iter().map(|w| t.lookup(w).map(str::to_string)).collect())
            }
            TranslitProvider::Remote(client) => client
                .transliterate_batch(words)
                .into_iter()
                .map(|r| r.map(Some))
                .collect(),
        }
    }
}

/// Whole-sentence transliteration. Only the rule-based and remote
/// providers are contextual.
pub fn transliterate_contextual(sentence: &str, provider: &TranslitProvider) -> Result<Transliteration> {
    match provider {
        TranslitProvider::ContextualRules(t) => Ok(transliterate_with_rules(sentence, t)),
        TranslitProvider::Remote(client) => {
            let text = client
                .transliterate_batch(&[sentence.to_string()])
                .pop()
                .expect("one result per sentence")?;
            Ok(Transliteration {
                text,
                misses: Vec::new(),
            })
        }
        TranslitProvider::WordTable(_) => Err(Error::Parameter(
            "word-table provider is not contextual; use transliterate_word_based".into(),
        )),
    }
}

/// Dispatches to word-based or contextual transliteration by provider kind.
pub fn transliterate(sentence: &str, provider: &TranslitProvider) -> Result<Transliteration> {
    match provider {
        TranslitProvider::WordTable(t) => Ok(transliterate_word_based(sentence, t)),
        other => transliterate_contextual(sentence, other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, &str)]) -> TranslitTable {
        let mut t = TranslitTable::new();
        for (s, l) in pairs {
            t.insert(*s, *l).unwrap();
        }
        t
    }

    #[test]
    fn word_based_substitution() {
        let t = table(&[("X", "x"), ("Y", "y")]);
        let r = transliterate_word_based("X Y X", &t);
        assert_eq!(r.text, "x y x");
        assert!(r.misses.is_empty());
        let r = transliterate_word_based("X Z", &TranslitTable::new());
        assert_eq!(r.text, "X Z");
        assert_eq!(r.misses, vec!["X", "Z"]);
    }

    #[test]
    fn word_based_ignores_context() {
        // पे has a single table entry, so it comes out the same in both sentences.
        let mut t = table(&[("पे", "pe"), ("गाना", "gaana"), ("बिल", "bill")]);
        t.add_rule(ContextRule {
            source: "पे".into(),
            latin: "pay".into(),
            predicate: Predicate::Prev("bill".into()),
        })
        .unwrap();
        assert_eq!(transliterate_word_based("गाना पे", &t).text, "gaana pe");
        assert_eq!(transliterate_word_based("बिल पे", &t).text, "bill pe");
    }

    #[test]
    fn contextual_rules_resolve_homographs() {
        let mut t = table(&[("पे", "pay"), ("गाना", "gaana"), ("बिल", "bill")]);
        t.parse_rules("पे\tpe\tprev=गाना\n").unwrap();
        let p = TranslitProvider::ContextualRules(t);
        assert_eq!(transliterate_contextual("गाना पे", &p).unwrap().text, "gaana pe");
        assert_eq!(transliterate_contextual("बिल पे", &p).unwrap().text, "bill pay");
    }

    #[test]
    fn next_and_default_predicates() {
        let mut t = table(&[("क", "ka"), ("ख", "kha")]);
        t.parse_rules("क\tkaa\tnext=kha\nक\tkay\tdefault\n").unwrap();
        let p = TranslitProvider::ContextualRules(t);
        assert_eq!(transliterate_contextual("क ख", &p).unwrap().text, "kaa kha");
        assert_eq!(transliterate_contextual("क क", &p).unwrap().text, "kay kay");
    }

    #[test]
    fn contextual_without_rules_matches_word_based() {
        let t = table(&[("A", "a"), ("B", "b")]);
        let s = "A B C A";
        let word = transliterate_word_based(s, &t);
        let ctx = transliterate_contextual(s, &TranslitProvider::ContextualRules(t)).unwrap();
        assert_eq!(word, ctx);
    }

    #[test]
    fn out_of_table_sentence_is_unchanged() {
        let p = TranslitProvider::ContextualRules(table(&[("A", "a")]));
        let r = transliterate_contextual("q r s", &p).unwrap();
        assert_eq!(r.text, "q r s");
        assert_eq!(r.misses.len(), 3);
    }

    #[test]
    fn word_table_is_not_contextual() {
        let p = TranslitProvider::WordTable(TranslitTable::new());
        assert!(transliterate_contextual("a", &p).is_err());
        assert_eq!(transliterate("a", &p).unwrap().text, "a");
    }

    #[test]
    fn table_file_validation() {
        assert!(TranslitTable::parse_table("a\tb\n").is_ok());
        assert!(matches!(
            TranslitTable::parse_table("a\tb\nc\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(TranslitTable::parse_table("\tb\n").is_err());
        let mut t = table(&[("a", "b")]);
        assert!(matches!(t.parse_rules("z\tq\tdefault\n"), Err(Error::Parse { line: 1, .. })));
        assert!(t.parse_rules("a\tq\tsideways=x\n").is_err());
        t.parse_rules("a\tq\tnext=x\n").unwrap();
        let mut again = TranslitTable::parse_table(&t.table_tsv()).unwrap();
        again.parse_rules(&t.rules_tsv()).unwrap();
        assert_eq!(again, t);
    }
}

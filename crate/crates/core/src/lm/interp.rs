use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{LanguageModel, NGramModel, BOS, UNK};
use crate::error::{Error, Result};

/// Weight of the English component in the Hinglish model.
pub const LAMBDA_EN: f64 = 0.9;

/// Linear interpolation of an English and a (transliterated) Hindi model
/// over the union vocabulary. A word one component lacks receives an
/// equal share of that component's `<unk>` probability, the share also
/// kept by `<unk>` itself, so each component stays normalised over the
/// union.
#[derive(Debug, Clone)]
pub struct InterpolatedLM {
    en: NGramModel,
    hi: NGramModel,
    lambda_en: f64,
    vocab: BTreeSet<String>,
    en_shares: f64,
    hi_shares: f64,
}

impl InterpolatedLM {
    pub fn new(en: NGramModel, hi: NGramModel, lambda_en: f64) -> Result<Self> {
        if !(lambda_en > 0.0 && lambda_en < 1.0) {
            return Err(Error::Parameter(format!("λ_en = {lambda_en} must lie strictly inside (0, 1)")));
        }
        let vocab: BTreeSet<String> = en.predictable().into_iter().chain(hi.predictable()).collect();
        let missing = |m: &NGramModel| vocab.iter().filter(|w| !m.contains(w)).count() as f64;
        let (en_shares, hi_shares) = (missing(&en) + 1.0, missing(&hi) + 1.0);
        Ok(Self {
            en,
            hi,
            lambda_en,
            vocab,
            en_shares,
            hi_shares,
        })
    }

    pub fn lambda_en(&self) -> f64 {
        self.lambda_en
    }

    pub fn components(&self) -> (&NGramModel, &NGramModel) {
        (&self.en, &self.hi)
    }

    fn component(m: &NGramModel, shares: f64, context: &[&str], word: &str) -> f64 {
        if word != UNK && m.contains(word) {
            m.prob(context, word)
        } else {
            m.prob(context, UNK) / shares
        }
    }
}

impl LanguageModel for InterpolatedLM {
    fn order(&self) -> usize {
        self.en.order().max(self.hi.order())
    }

    fn predictable(&self) -> Vec<String> {
        self.vocab.iter().cloned().collect()
    }

    fn prob(&self, context: &[&str], word: &str) -> f64 {
        let word = if word == BOS || self.vocab.contains(word) { word } else { UNK };
        if word == BOS {
            return 0.0;
        }
        self.lambda_en * Self::component(&self.en, self.en_shares, context, word)
            + (1.0 - self.lambda_en) * Self::component(&self.hi, self.hi_shares, context, word)
    }

    fn contains(&self, word: &str) -> bool {
        self.vocab.contains(word)
    }
}

/// On-disk pointer to an interpolated model: the two component ARPA files
/// and the English weight, one `key = value` line each.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpDescriptor {
    pub en: PathBuf,
    pub hi: PathBuf,
    pub lambda_en: f64,
}

impl InterpDescriptor {
    pub fn parse(text: &str) -> Result<Self> {
        let (mut en, mut hi, mut lambda) = (None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected 'key = value', got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let slot_taken = match k {
                "en" => en.replace(PathBuf::from(v)).is_some(),
                "hi" => hi.replace(PathBuf::from(v)).is_some(),
                "lambda_en" => {
                    let x: f64 = v.parse().map_err(|_| Error::parse(i + 1, format!("bad weight {v:?}")))?;
                    lambda.replace(x).is_some()
                }
                other => return Err(Error::parse(i + 1, format!("unknown key {other:?}"))),
            };
            if slot_taken {
                return Err(Error::parse(i + 1, format!("duplicate key {k:?}")));
            }
        }
        let missing = |k: &str| Error::parse(0, format!("missing key {k:?}"));
        let d = Self {
            en: en.ok_or_else(|| missing("en"))?,
            hi: hi.ok_or_else(|| missing("hi"))?,
            lambda_en: lambda.ok_or_else(|| missing("lambda_en"))?,
        };
        if !(d.lambda_en > 0.0 && d.lambda_en < 1.0) {
            return Err(Error::Parameter(format!("λ_en = {} must lie strictly inside (0, 1)", d.lambda_en)));
        }
        Ok(d)
    }

    pub fn render(&self) -> String {
        format!("en = {}\nhi = {}\nlambda_en = {}\n", self.en.display(), self.hi.display(), self.lambda_en)
    }

    /// Loads both components; relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<InterpolatedLM> {
        let en = super::import_arpa(&base.join(&self.en))?;
        let hi = super::import_arpa(&base.join(&self.hi))?;
        InterpolatedLM::new(en, hi, self.lambda_en)
    }
}

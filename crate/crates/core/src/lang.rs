use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The two languages of the bilingual setup, in head order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Hi,
}

impl Lang {
    pub const ALL: [Lang; 2] = [Lang::En, Lang::Hi];

    pub fn index(self) -> usize {
        match self {
            Lang::En => 0,
            Lang::Hi => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Hi => "hi",
        }
    }

    pub fn other(self) -> Lang {
        match self {
            Lang::En => Lang::Hi,
            Lang::Hi => Lang::En,
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Lang::En),
            "hi" => Ok(Lang::Hi),
            other => Err(Error::Language(other.to_string())),
        }
    }
}

/// Utterance-level language: one of the two languages or code-mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UttLang {
    En,
    Hi,
    Mix,
}

impl UttLang {
    pub fn as_str(self) -> &'static str {
        match self {
            UttLang::En => "en",
            UttLang::Hi => "hi",
            UttLang::Mix => "mix",
        }
    }

    pub fn single(self) -> Option<Lang> {
        match self {
            UttLang::En => Some(Lang::En),
            UttLang::Hi => Some(Lang::Hi),
            UttLang::Mix => None,
        }
    }
}

impl From<Lang> for UttLang {
    fn from(l: Lang) -> Self {
        match l {
            Lang::En => UttLang::En,
            Lang::Hi => UttLang::Hi,
        }
    }
}

impl fmt::Display for UttLang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UttLang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mix" => Ok(UttLang::Mix),
            other => other.parse::<Lang>().map(UttLang::from),
        }
    }
}

use std::collections::{BTreeSet, HashSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::translit::TranslitTable;

pub(super) const ENGLISH: &[&str] = &[
    "play", "song", "show", "call", "weather", "today", "music", "movie", "news", "open", "set",
    "alarm", "timer", "tell", "what", "is", "how", "please", "next", "stop", "video", "mom", "dad",
    "book", "cab", "order", "food", "message", "send", "read", "volume", "up", "down", "light",
    "on", "off", "turn", "find", "near", "restaurant", "traffic", "route", "home", "office", "time",
    "date", "remind", "tomorrow", "morning", "night", "cricket", "score", "match", "live",
    "channel", "radio", "pause", "resume", "shuffle", "playlist", "latest", "trending", "artist",
    "album", "podcast", "photo", "camera", "battery", "wifi", "bluetooth", "search", "map",
    "ticket", "train", "flight", "hotel", "price", "stock", "joke", "story",
];

const CONSONANTS: &[(&str, &str)] = &[
    ("क", "k"),
    ("ग", "g"),
    ("च", "ch"),
    ("ज", "j"),
    ("त", "t"),
    ("द", "d"),
    ("न", "n"),
    ("प", "p"),
    ("ब", "b"),
    ("म", "m"),
    ("य", "y"),
    ("र", "r"),
    ("ल", "l"),
    ("स", "s"),
    ("ह", "h"),
];

const VOWEL_SIGNS: &[(&str, &str)] = &[
    ("", "a"),
    ("\u{093e}", "aa"),
    ("\u{093f}", "i"),
    ("\u{0940}", "ee"),
    ("\u{0941}", "u"),
    ("\u{0947}", "e"),
    ("\u{094b}", "o"),
];

/// `n` distinct Devanagari words of two or three syllables, with Latin
/// forms that are unique and avoid every string in `reserved`.
pub(super) fn devanagari_vocab<R: Rng>(
    n: usize,
    reserved: &HashSet<String>,
    rng: &mut R,
) -> Result<(Vec<String>, TranslitTable)> {
    let mut words = Vec::with_capacity(n);
    let mut latin_seen = BTreeSet::new();
    let mut table = TranslitTable::new();
    let mut attempts = 0;
    while words.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Spec(format!("could not draw {n} distinct Hindi words")));
        }
        let syllables = rng.gen_range(2..=3);
        let (mut src, mut lat) = (String::new(), String::new());
        for _ in 0..syllables {
            let (cs, cl) = CONSONANTS[rng.gen_range(0..CONSONANTS.len())];
            let (vs, vl) = VOWEL_SIGNS[rng.gen_range(0..VOWEL_SIGNS.len())];
            src.push_str(cs);
            src.push_str(vs);
            lat.push_str(cl);
            lat.push_str(vl);
        }
        if reserved.contains(&lat) || !latin_seen.insert(lat.clone()) {
            continue;
        }
        table.insert(src.clone(), lat)?;
        words.push(src);
    }
    Ok((words, table))
}

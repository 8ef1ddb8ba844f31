//! ARPA back-off text format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{NGramModel, Smoothing};
use crate::error::{Error, Result};

/// log10 value written for zero probabilities (the `<s>` unigram).
const LOG_ZERO: f64 = -99.0;

fn log10(p: f64) -> f64 {
    if p > 0.0 {
        p.log10()
    } else {
        LOG_ZERO
    }
}

pub fn render_arpa(lm: &NGramModel) -> String {
    let mut by_order: Vec<Vec<(Vec<&str>, f64, Option<f64>)>> = vec![Vec::new(); lm.order];
    for e in lm.entries() {
        by_order[e.0.len() - 1].push(e);
    }
    for level in &mut by_order {
        level.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let mut out = String::from("\\data\\\n");
    for (k, level) in by_order.iter().enumerate() {
        let _ = writeln!(out, "ngram {}={}", k + 1, level.len());
    }
    for (k, level) in by_order.iter().enumerate() {
        let _ = write!(out, "\n\\{}-grams:\n", k + 1);
        for (gram, p, bow) in level {
            let _ = write!(out, "{}\t{}", log10(*p), gram.join(" "));
            if let Some(b) = bow {
                let _ = write!(out, "\t{}", log10(*b));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn export_arpa(lm: &NGramModel, path: &Path) -> Result<()> {
    fs::write(path, render_arpa(lm))?;
    Ok(())
}

pub fn import_arpa(path: &Path) -> Result<NGramModel> {
    parse_arpa(&fs::read_to_string(path)?)
}

fn parse_log(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("bad log10 value {field:?}")))?;
    if !v.is_finite() || v > 0.0 {
        return Err(Error::parse(line, format!("log10 value {v} out of range")));
    }
    Ok(if v <= LOG_ZERO { 0.0 } else { 10f64.powf(v) })
}

enum State {
    Start,
    Header,
    Grams(usize),
    Done,
}

pub fn parse_arpa(text: &str) -> Result<NGramModel> {
    let mut declared: Vec<usize> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    let mut lm: Option<NGramModel> = None;
    let mut state = State::Start;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match state {
            State::Start => {
                if line != "\\data\\" {
                    return Err(Error::parse(n, "expected \\data\\"));
                }
                state = State::Header;
            }
            State::Done => return Err(Error::parse(n, "content after \\end\\")),
            _ if line == "\\end\\" => {
                if lm.is_none() {
                    return Err(Error::parse(n, "\\end\\ before any n-gram section"));
                }
                state = State::Done;
            }
            State::Header | State::Grams(_) if line.starts_with('\\') => {
                let k: usize = line
                    .strip_prefix('\\')
                    .and_then(|s| s.strip_suffix("-grams:"))
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(n, format!("bad section header {line:?}")))?;
                let expected = match state {
                    State::Grams(prev) => prev + 1,
                    _ => 1,
                };
                if k != expected || k > declared.len() {
                    return Err(Error::parse(n, format!("unexpected section {k}-grams")));
                }
                if let State::Grams(prev) = state {
                    check_count(&declared, &seen, prev, n)?;
                }
                if lm.is_none() {
                    lm = Some(NGramModel::empty(declared.len(), Smoothing::Imported));
                }
                state = State::Grams(k);
            }
            State::Header => {
                let rest = line
                    .strip_prefix("ngram ")
                    .ok_or_else(|| Error::parse(n, format!("expected 'ngram k=count', got {line:?}")))?;
                let (k, c) = rest
                    .split_once('=')
                    .and_then(|(k, c)| Some((k.trim().parse::<usize>().ok()?, c.trim().parse::<usize>().ok()?)))
                    .ok_or_else(|| Error::parse(n, format!("bad count line {line:?}")))?;
                if k != declared.len() + 1 {
                    return Err(Error::parse(n, format!("ngram {k} declared out of order")));
                }
                declared.push(c);
                seen.push(0);
            }
            State::Grams(k) => {
                let lm = lm.as_mut().expect("created with first section");
                let fields: Vec<&str> = line.split_whitespace().collect();
                let bow = match fields.len() {
                    x if x == k + 1 => None,
                    x if x == k + 2 && k < declared.len() => Some(parse_log(fields[k + 1], n)?),
                    _ => return Err(Error::parse(n, format!("expected {k} tokens, a log10 prob and optional back-off"))),
                };
                let p = parse_log(fields[0], n)?;
                let gram: Vec<String> = fields[1..=k].iter().map(|s| s.to_string()).collect();
                let key = lm.ids(&gram);
                if lm.probs.insert(key.clone(), p).is_some() {
                    return Err(Error::parse(n, format!("duplicate n-gram {:?}", gram.join(" "))));
                }
                if let Some(b) = bow {
                    lm.backoffs.insert(key, b);
                }
                seen[k - 1] += 1;
            }
        }
    }
    match state {
        State::Done => {}
        _ => return Err(Error::parse(last_line.max(1), "missing \\end\\")),
    }
    let lm = lm.expect("set before \\end\\");
    for k in 1..=lm.order {
        check_count(&declared, &seen, k, last_line)?;
    }
    Ok(lm)
}

fn check_count(declared: &[usize], seen: &[usize], k: usize, line: usize) -> Result<()> {
    if declared[k - 1] != seen[k - 1] {
        return Err(Error::parse(
            line,
            format!("{}-grams: header declares {}, found {}", k, declared[k - 1], seen[k - 1]),
        ));
    }
    Ok(())
}

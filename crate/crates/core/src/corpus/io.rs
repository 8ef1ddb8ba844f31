//! JSON-lines corpus files: one utterance per line, frames as base64
//! little-endian f32.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::Utterance;
use crate::error::{Error, Result};
use crate::lang::{Lang, UttLang};
use crate::tensor::Tensor;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    lang: UttLang,
    words: Vec<String>,
    dim: usize,
    frames: String,
    labels: Vec<usize>,
    frame_langs: Vec<Lang>,
}

pub fn render_utterance_line(u: &Utterance) -> String {
    let mut bytes = Vec::with_capacity(u.frames.len() * 4);
    for &v in u.frames.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let rec = Record {
        id: u.id.clone(),
        lang: u.lang,
        words: u.words.clone(),
        dim: u.frames.cols(),
        frames: STANDARD.encode(bytes),
        labels: u.labels.clone(),
        frame_langs: u.frame_langs.clone(),
    };
    serde_json::to_string(&rec).expect("record serialises")
}

/// Parses one corpus line. `line_no` is used for error messages only.
pub fn parse_utterance_line(line: &str, line_no: usize) -> Result<Utterance> {
    let rec: Record = serde_json::from_str(line).map_err(|e| Error::parse(line_no, e.to_string()))?;
    let bytes = STANDARD
        .decode(rec.frames.as_bytes())
        .map_err(|e| Error::parse(line_no, format!("frames: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(line_no, "frame bytes are not a whole number of f32 values"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if rec.dim == 0 || data.is_empty() || data.len() % rec.dim != 0 {
        return Err(Error::parse(line_no, format!("{} values do not fill rows of {}", data.len(), rec.dim)));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(line_no, "non-finite feature value"));
    }
    let rows = data.len() / rec.dim;
    let frames = Tensor::new(vec![rows, rec.dim], data).map_err(|e| Error::parse(line_no, e.to_string()))?;
    let u = Utterance {
        id: rec.id,
        lang: rec.lang,
        words: rec.words,
        frames,
        labels: rec.labels,
        frame_langs: rec.frame_langs,
    };
    u.validate(None).map_err(|e| Error::parse(line_no, e.to_string()))?;
    Ok(u)
}

pub fn write_corpus(path: &Path, utts: &[Utterance]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for u in utts {
        writeln!(f, "{}", render_utterance_line(u))?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a corpus file; blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<Utterance>> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<Utterance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_utterance_line(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_codemix, SynthParams, SynthSpec};

    #[test]
    fn round_trip_is_exact() {
        let (spec, _) = SynthSpec::generate(&SynthParams::default(), 5).unwrap();
        let utts = synthesize_codemix(&spec, 0.5, 6, 1).unwrap();
        let text: String = utts.iter().map(|u| render_utterance_line(u) + "\n").collect();
        assert_eq!(parse_corpus(&text).unwrap(), utts);
    }

    #[test]
    fn malformed_lines_report_position() {
        let (spec, _) = SynthSpec::generate(&SynthParams::default(), 5).unwrap();
        let utts = synthesize_codemix(&spec, 0.5, 1, 1).unwrap();
        let good = render_utterance_line(&utts[0]);
        let text = format!("{good}\n\n{{\"id\":1}}\n");
        match parse_corpus(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = good.replacen("\"labels\":[", "\"labels\":[0,", 1);
        assert!(matches!(parse_utterance_line(&short, 1), Err(Error::Parse { .. })));
    }
}

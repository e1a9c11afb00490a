//! Signature scanning of request events.

use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::pagescript::{PatternError, Regex};
use crate::quineforge::url_decode_param;
use crate::websim::{Event, EventKind};

pub const DEFAULT_SIGNATURES_TSV: &str = include_str!("../../../../signatures/default.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SigKind {
    Substring,
    Pattern,
}

#[derive(Debug, Clone)]
pub struct Signature {
    pub id: String,
    pub kind: SigKind,
    pub needle: Vec<u8>,
    pub description: String,
    regex: Option<Regex>,
}

impl Signature {
    pub fn substring(id: &str, needle: &[u8]) -> Self {
        Signature {
            id: id.into(),
            kind: SigKind::Substring,
            needle: needle.to_vec(),
            description: String::new(),
            regex: None,
        }
    }

    pub fn pattern(id: &str, pattern: &str) -> Result<Self, PatternError> {
        let regex = Some(Regex::new(pattern)?);
        Ok(Signature {
            id: id.into(),
            kind: SigKind::Pattern,
            needle: pattern.as_bytes().to_vec(),
            description: String::new(),
            regex,
        })
    }

    pub fn matches(&self, text: &[u8]) -> bool {
        match &self.regex {
            Some(re) => re.is_match(text),
            None => !self.needle.is_empty() && text.windows(self.needle.len()).any(|w| w == self.needle),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("line {line}: expected id<TAB>kind<TAB>needle")]
    Shape { line: usize },
    #[error("line {line}: unknown kind {kind:?}")]
    Kind { line: usize, kind: String },
    #[error("line {line}: {source}")]
    Pattern { line: usize, source: PatternError },
    #[error("line {line}: duplicate id {id:?}")]
    Duplicate { line: usize, id: String },
}

/// One signature per line: `id<TAB>kind<TAB>needle[<TAB>description]`.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_signatures(text: &str) -> Result<Vec<Signature>, SignatureError> {
    let mut out: Vec<Signature> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = l.split('\t').collect();
        if !(3..=4).contains(&parts.len()) || parts[0].is_empty() || parts[2].is_empty() {
            return Err(SignatureError::Shape { line });
        }
        let mut sig = match parts[1].to_ascii_uppercase().as_str() {
            "SUBSTRING" => Signature::substring(parts[0], parts[2].as_bytes()),
            "PATTERN" => {
                Signature::pattern(parts[0], parts[2]).map_err(|source| SignatureError::Pattern { line, source })?
            }
            _ => return Err(SignatureError::Kind { line, kind: parts[1].to_string() }),
        };
        if out.iter().any(|s| s.id == sig.id) {
            return Err(SignatureError::Duplicate { line, id: sig.id });
        }
        sig.description = parts.get(3).unwrap_or(&"").to_string();
        out.push(sig);
    }
    Ok(out)
}

pub fn default_signatures() -> Vec<Signature> {
    load_signatures(DEFAULT_SIGNATURES_TSV).expect("shipped signatures parse")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Flag {
    pub event_index: usize,
    pub seq: u64,
    pub signature: String,
}

/// Measurements reported alongside the signature verdicts. They do not
/// influence flagging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantFeatures {
    pub event_index: usize,
    pub length: usize,
    /// Share of the decoded URL made of `0x`-literal hex digits.
    pub hex_density: f64,
}

fn hex_density(decoded: &[u8]) -> f64 {
    if decoded.is_empty() {
        return 0.0;
    }
    let mut digits = 0;
    let mut i = 0;
    while i + 1 < decoded.len() {
        if decoded[i] == b'0' && matches!(decoded[i + 1], b'x' | b'X') {
            let n = decoded[i + 2..].iter().take_while(|b| b.is_ascii_hexdigit()).count();
            digits += n;
            i += 2 + n;
        } else {
            i += 1;
        }
    }
    digits as f64 / decoded.len() as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DetectionReport {
    pub scanned: usize,
    pub flagged: Vec<Flag>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub features: Vec<QuantFeatures>,
}

impl DetectionReport {
    pub fn recall(&self) -> f64 {
        let pos = self.true_positives + self.false_negatives;
        if pos == 0 {
            1.0
        } else {
            self.true_positives as f64 / pos as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let flagged = self.true_positives + self.false_positives;
        if flagged == 0 {
            1.0
        } else {
            self.true_positives as f64 / flagged as f64
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "requests scanned: {}", self.scanned);
        let _ = writeln!(s, "flags: {}", self.flagged.len());
        let _ = writeln!(s, "true positives: {}", self.true_positives);
        let _ = writeln!(s, "false positives: {}", self.false_positives);
        let _ = writeln!(s, "false negatives: {}", self.false_negatives);
        let _ = writeln!(s, "true negatives: {}", self.true_negatives);
        let _ = writeln!(s, "recall: {:.4}", self.recall());
        let _ = writeln!(s, "precision: {:.4}", self.precision());
        s
    }

    /// One JSON record per flag.
    pub fn flag_lines(&self) -> String {
        self.flagged.iter().map(|f| serde_json::to_string(f).expect("plain record") + "\n").collect()
    }
}

/// Test every request event (server-side GETs and script-issued blind
/// requests) against every signature, on the raw URL and on its decoded
/// form, and score the result against the event labels.
pub fn scan_request_log(events: &[Event], signatures: &[Signature]) -> DetectionReport {
    let mut r = DetectionReport::default();
    for (i, ev) in events.iter().enumerate() {
        if !matches!(ev.kind, EventKind::HttpGet | EventKind::BlindRequest) {
            continue;
        }
        let Some(url) = &ev.detail.url else { continue };
        r.scanned += 1;
        let raw = url.as_bytes();
        let decoded = url_decode_param(raw);
        let mut hit = false;
        for sig in signatures {
            if sig.matches(raw) || sig.matches(&decoded) {
                hit = true;
                r.flagged.push(Flag { event_index: i, seq: ev.seq, signature: sig.id.clone() });
            }
        }
        r.features.push(QuantFeatures { event_index: i, length: raw.len(), hex_density: hex_density(&decoded) });
        match (hit, ev.detail.egg.unwrap_or(false)) {
            (true, true) => r.true_positives += 1,
            (true, false) => r.false_positives += 1,
            (false, true) => r.false_negatives += 1,
            (false, false) => r.true_negatives += 1,
        }
    }
    r
}

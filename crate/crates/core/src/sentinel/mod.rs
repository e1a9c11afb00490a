//! Countermeasures: parameter validation, output escaping and signature
//! scanning of request logs.

mod signatures;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use signatures::{
    default_signatures, load_signatures, scan_request_log, DetectionReport, Flag, QuantFeatures, SigKind, Signature,
    SignatureError, DEFAULT_SIGNATURES_TSV,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    IntegerOnly,
    MaxLength(usize),
    /// Every byte must be in the set.
    Charset(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad rule {0:?}: expected integer_only, max_length:N or charset:BYTES")]
pub struct RuleParseError(pub String);

impl Rule {
    /// `integer_only`, `max_length:N`, or `charset:BYTES` where BYTES lists
    /// bytes and `x-y` ranges.
    pub fn parse(s: &str) -> Result<Rule, RuleParseError> {
        let bad = || RuleParseError(s.to_string());
        if s == "integer_only" {
            return Ok(Rule::IntegerOnly);
        }
        if let Some(n) = s.strip_prefix("max_length:") {
            return n.parse().map(Rule::MaxLength).map_err(|_| bad());
        }
        if let Some(bytes) = s.strip_prefix("charset:") {
            let b = bytes.as_bytes();
            let mut set = Vec::new();
            let mut i = 0;
            while i < b.len() {
                if i + 2 < b.len() && b[i + 1] == b'-' {
                    if b[i] > b[i + 2] {
                        return Err(bad());
                    }
                    set.extend(b[i]..=b[i + 2]);
                    i += 3;
                } else {
                    set.push(b[i]);
                    i += 1;
                }
            }
            if set.is_empty() {
                return Err(bad());
            }
            set.sort_unstable();
            set.dedup();
            return Ok(Rule::Charset(set));
        }
        Err(bad())
    }

    fn check(&self, raw: &[u8]) -> Result<(), Rejection> {
        let ok = match self {
            Rule::IntegerOnly => is_integer(raw),
            Rule::MaxLength(n) => raw.len() <= *n,
            Rule::Charset(set) => raw.iter().all(|b| set.binary_search(b).is_ok()),
        };
        if ok {
            Ok(())
        } else {
            Err(Rejection { rule: self.clone() })
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::IntegerOnly => write!(f, "integer_only"),
            Rule::MaxLength(n) => write!(f, "max_length:{n}"),
            Rule::Charset(set) => write!(f, "charset:{}", String::from_utf8_lossy(set)),
        }
    }
}

/// Optional `-` then one or more ASCII digits.
pub fn is_integer(raw: &[u8]) -> bool {
    let digits = raw.strip_prefix(b"-").unwrap_or(raw);
    !digits.is_empty() && digits.iter().all(u8::is_ascii_digit)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub rule: Rule,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::IntegerOnly => write!(f, "non-integer value"),
            Rule::MaxLength(n) => write!(f, "longer than {n} bytes"),
            Rule::Charset(_) => write!(f, "byte outside the allowed set"),
        }
    }
}

/// Per-parameter rules; every rule listed for a parameter must pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    pub rules: BTreeMap<String, Vec<Rule>>,
}

impl ValidationPolicy {
    pub fn integer_only(param: &str) -> Self {
        let mut rules = BTreeMap::new();
        rules.insert(param.to_string(), vec![Rule::IntegerOnly]);
        ValidationPolicy { rules }
    }
}

pub fn validate_param(policy: &ValidationPolicy, name: &str, raw: &[u8]) -> Result<(), Rejection> {
    for rule in policy.rules.get(name).into_iter().flatten() {
        rule.check(raw)?;
    }
    Ok(())
}

pub fn html_escape(s: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len());
    for &b in s {
        match b {
            b'<' => out.extend_from_slice(b"&lt;"),
            b'>' => out.extend_from_slice(b"&gt;"),
            b'&' => out.extend_from_slice(b"&amp;"),
            b'"' => out.extend_from_slice(b"&quot;"),
            b'\'' => out.extend_from_slice(b"&#39;"),
            _ => out.push(b),
        }
    }
    out
}

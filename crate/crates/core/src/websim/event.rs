use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    SeedInjection,
    HttpGet,
    SqlExec,
    InfectionWrite,
    PageServed,
    ScriptRun,
    BlindRequest,
    Alert,
    DefenseReject,
    Error,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::SeedInjection => "SEED_INJECTION",
            EventKind::HttpGet => "HTTP_GET",
            EventKind::SqlExec => "SQL_EXEC",
            EventKind::InfectionWrite => "INFECTION_WRITE",
            EventKind::PageServed => "PAGE_SERVED",
            EventKind::ScriptRun => "SCRIPT_RUN",
            EventKind::BlindRequest => "BLIND_REQUEST",
            EventKind::Alert => "ALERT",
            EventKind::DefenseReject => "DEFENSE_REJECT",
            EventKind::Error => "ERROR",
        }
    }
}

/// Event payload. Each kind fills the fields that apply to it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// Ground truth on request events: did this request carry the egg.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egg: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    /// Sequence number of the event that caused this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statements: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_sets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discarded_result_sets: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scripts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alerts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub step: u64,
    pub seq: u64,
    pub kind: EventKind,
    pub site: String,
    pub detail: Detail,
}

/// Printable ASCII passes through; any other byte and `\` become `\xNN`.
pub fn ascii_text(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x20..0x7f).contains(&b) && b != b'\\' {
            s.push(b as char);
        } else {
            let _ = write!(s, "\\x{b:02x}");
        }
    }
    s
}

/// One JSON object per line.
pub fn write_event_log(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("event log line {line}: {source}")]
pub struct LogParseError {
    pub line: usize,
    pub source: serde_json::Error,
}

pub fn parse_event_log(text: &str) -> Result<Vec<Event>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| LogParseError { line: i + 1, source }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub infected_sites: usize,
    pub infected_fields: usize,
    pub requests_total: usize,
}

pub const METRICS_HEADER: &str = "step,infected_sites,infected_fields,requests_total";

pub fn write_metrics(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.step, r.infected_sites, r.infected_fields, r.requests_total);
    }
    out
}

//! Runs full generations of the worm in scratch databases.

use std::fmt;

use super::{egg_in, scratch_cell, scratch_db, url_decode_param, Egg};
use crate::minisql::{exec_batch, ExecContext};
use crate::pagescript::{extract_scripts, run_source, PageDocument, ScriptLimits};

/// The one link on the probe page. Its integer parameter is where the
/// script appends the egg.
pub const PROBE_LINK: &[u8] = b"http://next.test/greetUser?numid=1";

/// First point where two byte strings differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteDiff {
    pub offset: usize,
    pub expected_len: usize,
    pub actual_len: usize,
    pub expected_excerpt: String,
    pub actual_excerpt: String,
}

impl ByteDiff {
    /// `None` when the inputs are equal.
    pub fn find(expected: &[u8], actual: &[u8]) -> Option<ByteDiff> {
        (expected != actual).then(|| Self::between(expected, actual))
    }

    pub fn between(expected: &[u8], actual: &[u8]) -> ByteDiff {
        let offset = expected.iter().zip(actual).position(|(a, b)| a != b).unwrap_or(expected.len().min(actual.len()));
        let excerpt = |s: &[u8]| {
            let lo = offset.saturating_sub(16);
            let hi = (offset + 16).min(s.len());
            String::from_utf8_lossy(&s[lo.min(hi)..hi]).escape_debug().to_string()
        };
        ByteDiff {
            offset,
            expected_len: expected.len(),
            actual_len: actual.len(),
            expected_excerpt: excerpt(expected),
            actual_excerpt: excerpt(actual),
        }
    }
}

impl fmt::Display for ByteDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "first difference at byte {} (lengths {} vs {}): expected \"{}\", got \"{}\"",
            self.offset, self.expected_len, self.actual_len, self.expected_excerpt, self.actual_excerpt
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifyReport {
    pub ok: bool,
    /// Generations that reproduced the injection exactly.
    pub generations_passed: usize,
    pub failure: Option<String>,
    /// Decoded next-generation injection vs the one that was run.
    pub injection_diff: Option<ByteDiff>,
    /// Script written in the second database vs the first.
    pub egg_diff: Option<ByteDiff>,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "fixed point holds for {} generation(s)", self.generations_passed);
        }
        writeln!(f, "fixed point broken after {} good generation(s)", self.generations_passed)?;
        if let Some(m) = &self.failure {
            writeln!(f, "  {m}")?;
        }
        if let Some(d) = &self.injection_diff {
            writeln!(f, "  injection: {d}")?;
        }
        if let Some(d) = &self.egg_diff {
            writeln!(f, "  script: {d}")?;
        }
        Ok(())
    }
}

/// Infect a fresh scratch database with `injection` and return the script
/// written into its cell.
fn infect(injection: &[u8]) -> Result<Vec<u8>, String> {
    let mut db = scratch_db();
    exec_batch(&mut db, injection, &mut ExecContext::default())
        .map_err(|e| format!("execution failed: {}", e.error))?;
    let cell = scratch_cell(&db);
    egg_in(&cell).map(<[u8]>::to_vec).ok_or_else(|| "no script was written into the cell".to_string())
}

struct Generation {
    next_injection: Vec<u8>,
    egg_a: Vec<u8>,
    egg_b: Result<Vec<u8>, String>,
}

fn generation(injection: &[u8]) -> Result<Generation, String> {
    let egg_a = infect(injection).map_err(|e| format!("first database: {e}"))?;
    let mut page = egg_a.clone();
    page.extend_from_slice(b"<a href=\"");
    page.extend_from_slice(PROBE_LINK);
    page.extend_from_slice(b"\">next</a>");
    let doc = PageDocument::new("scratch.test", page.clone());
    let mut requests = Vec::new();
    for body in extract_scripts(&page) {
        let out = run_source(&body, &doc, &ScriptLimits::default());
        if let Some(e) = out.error {
            return Err(format!("script failed: {e}"));
        }
        requests.extend(out.effects.blind_requests);
    }
    let [request] = requests.as_slice() else {
        return Err(format!("expected one request, script made {}", requests.len()));
    };
    let suffix =
        request.strip_prefix(PROBE_LINK).ok_or_else(|| "request does not extend the probe link".to_string())?;
    let next_injection = url_decode_param(suffix);
    let egg_b = infect(&next_injection).map_err(|e| format!("second database: {e}"));
    Ok(Generation { next_injection, egg_a, egg_b })
}

/// One generation: run the injection, let the written script request the
/// probe link, decode that request, run it again and compare.
pub fn verify_fixed_point(egg: &Egg) -> VerifyReport {
    verify_generations(egg, 1)
}

/// Repeat [`verify_fixed_point`] `n` times, feeding each decoded request
/// into the next round.
pub fn verify_generations(egg: &Egg, n: usize) -> VerifyReport {
    let mut report = VerifyReport::default();
    let mut current = egg.injection_sql.clone();
    for g in 1..=n {
        let gen = match generation(&current) {
            Ok(gen) => gen,
            Err(e) => {
                report.failure = Some(format!("generation {g}: {e}"));
                return report;
            }
        };
        report.injection_diff = ByteDiff::find(&current, &gen.next_injection);
        match &gen.egg_b {
            Ok(b) => report.egg_diff = ByteDiff::find(&gen.egg_a, b),
            Err(e) => report.failure = Some(format!("generation {g}: {e}")),
        }
        if report.injection_diff.is_some() || report.egg_diff.is_some() || report.failure.is_some() {
            return report;
        }
        report.generations_passed = g;
        current = gen.next_injection;
    }
    report.ok = true;
    report
}

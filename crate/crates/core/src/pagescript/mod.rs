//! The client stage: a tiny script interpreter that reads the page it was
//! served in, finds link-shaped strings with a global pattern match, and
//! writes image tags whose `src` carries the SQL egg.
//!
//! The host object is `labpage` (`labpage.html`, `labpage.write`). There is
//! no way for a script to see what a request returns: [`ScriptEffects`] only
//! records what went out.

mod html;
mod interp;
mod parser;
pub mod regex;

use thiserror::Error;

pub use html::extract_scripts;
pub use parser::{parse_script, Expr, ScriptProgram, Stmt, StmtKind};
pub use regex::{PatternError, Regex};

/// The rendered page a script runs against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageDocument {
    pub origin: String,
    pub text: Vec<u8>,
}

impl PageDocument {
    pub fn new(origin: impl Into<String>, text: impl Into<Vec<u8>>) -> Self {
        PageDocument { origin: origin.into(), text: text.into() }
    }
}

/// Everything a run sent outward, in execution order. There is nowhere to
/// put a response.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptEffects {
    pub blind_requests: Vec<Vec<u8>>,
    pub alerts: Vec<Vec<u8>>,
    pub writes: Vec<Vec<u8>>,
}

impl ScriptEffects {
    pub fn is_empty(&self) -> bool {
        self.blind_requests.is_empty() && self.alerts.is_empty() && self.writes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLimits {
    pub max_loop_iterations: usize,
    pub max_steps: usize,
    /// Record one line per executed statement.
    pub trace: bool,
}

impl Default for ScriptLimits {
    fn default() -> Self {
        ScriptLimits { max_loop_iterations: 10_000, max_steps: 200_000, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {name} is not defined")]
    Reference { line: usize, name: String },
    #[error("type error on line {line}: {message}")]
    Type { line: usize, message: String },
    #[error("line {line}: {source}")]
    Pattern { line: usize, source: PatternError },
    #[error("loop ran past {0} iterations")]
    LoopLimit(usize),
    #[error("script ran past {0} steps")]
    StepLimit(usize),
}

/// Result of running one script. On error the effects produced before the
/// failing statement are kept; a script that fails to parse has none.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptOutcome {
    pub effects: ScriptEffects,
    pub error: Option<ScriptError>,
    pub trace: Vec<String>,
    /// Every variable at the end of the run, by name, in string form.
    pub globals: Vec<(String, Vec<u8>)>,
}

pub fn run_script(program: &ScriptProgram, doc: &PageDocument, limits: &ScriptLimits) -> ScriptOutcome {
    let mut it = interp::Interp::new(doc, limits);
    let error = it.run(program).err();
    let globals = it.globals();
    ScriptOutcome { effects: it.effects, error, trace: it.trace, globals }
}

/// Parse then run.
pub fn run_source(source: &[u8], doc: &PageDocument, limits: &ScriptLimits) -> ScriptOutcome {
    match parse_script(source) {
        Ok(p) => run_script(&p, doc, limits),
        Err(e) => ScriptOutcome { error: Some(e), ..Default::default() },
    }
}

/// The link-harvesting expression of the script stage, as it appears in
/// the script source.
pub const LINK_PATTERN: &str = r"[a-zA-Z0-9-\.?_&=:\/]+\/[a-zA-Z0-9-\.?_&=]+=[0-9]+";

/// Leftmost, non-overlapping, greedy matches of `pattern` in `text`.
pub fn match_all(pattern: &str, text: &[u8]) -> Result<Vec<Vec<u8>>, PatternError> {
    Ok(Regex::new(pattern)?.find_all(text).into_iter().map(<[u8]>::to_vec).collect())
}

/// Request URLs carried by `<img src=...>` tags in a piece of markup.
pub fn image_sources(markup: &[u8]) -> Vec<Vec<u8>> {
    interp::image_sources(markup)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> PageDocument {
        PageDocument::new("a.test", text)
    }

    #[test]
    fn alert_only() {
        let out = run_source(b"alert('hi')", &doc(""), &ScriptLimits::default());
        assert_eq!(out.error, None);
        assert_eq!(out.effects.alerts, vec![b"hi".to_vec()]);
        assert!(out.effects.blind_requests.is_empty());
    }

    #[test]
    fn partial_effects_survive_runtime_errors() {
        let out = run_source(
            b"alert('a'); labpage.write('<img src=x.test/a?i=1>'); nope();",
            &doc(""),
            &ScriptLimits::default(),
        );
        assert!(matches!(out.error, Some(ScriptError::Reference { .. })));
        assert_eq!(out.effects.alerts.len(), 1);
        assert_eq!(out.effects.blind_requests, vec![b"x.test/a?i=1".to_vec()]);
    }

    #[test]
    fn loop_cap() {
        let limits = ScriptLimits { max_loop_iterations: 50, ..Default::default() };
        let out = run_source(b"for(var i=0;i<100;i++){alert(i);}", &doc(""), &limits);
        assert_eq!(out.error, Some(ScriptError::LoopLimit(50)));
        assert_eq!(out.effects.alerts.len(), 50);
        let out = run_source(b"for(;;){}", &doc(""), &ScriptLimits::default());
        assert_eq!(out.error, Some(ScriptError::LoopLimit(10_000)));
    }

    #[test]
    fn no_matches_is_an_empty_list() {
        let src = b"var m=labpage.html.match(new RegExp(\"[0-9]+\",\"g\"));for(var i=0;i<m.length;i++){alert(m[i]);}alert(m.length);";
        let out = run_source(src, &doc("none"), &ScriptLimits::default());
        assert_eq!(out.error, None);
        assert_eq!(out.effects.alerts, vec![b"0".to_vec()]);
    }

    #[test]
    fn trace_lines() {
        let limits = ScriptLimits { trace: true, ..Default::default() };
        let out = run_source(b"var a=1;\nalert(a);", &doc(""), &limits);
        assert_eq!(out.trace, vec!["line 1: var a", "line 2: call alert"]);
    }

    #[test]
    fn image_source_extraction() {
        assert_eq!(image_sources(b"<img src=a/b?c=1%3BX>"), vec![b"a/b?c=1%3BX".to_vec()]);
        assert_eq!(image_sources(b"<IMG SRC=\"q\"> <img src=r s>"), vec![b"q".to_vec(), b"r".to_vec()]);
        assert!(image_sources(b"<img alt=x>").is_empty());
    }
}

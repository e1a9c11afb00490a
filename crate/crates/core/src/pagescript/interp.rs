use std::collections::HashMap;

use super::parser::{Expr, ScriptProgram, Stmt, StmtKind};
use super::regex::Regex;
use super::{PageDocument, ScriptEffects, ScriptError, ScriptLimits};

#[derive(Debug, Clone)]
enum Value {
    Undefined,
    Num(i64),
    Str(Vec<u8>),
    List(Vec<Vec<u8>>),
    RegExp { re: Regex, global: bool },
    Bool(bool),
    Page,
    Alert,
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Undefined => "undefined",
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::List(_) => "array",
            Value::RegExp { .. } => "regexp",
            Value::Bool(_) => "boolean",
            Value::Page => "page object",
            Value::Alert => "function",
        }
    }

    fn to_text(&self) -> Vec<u8> {
        match self {
            Value::Undefined => b"undefined".to_vec(),
            Value::Num(n) => n.to_string().into_bytes(),
            Value::Str(s) => s.clone(),
            Value::List(items) => items.join(&b","[..]),
            Value::RegExp { re, global } => format!("/{}/{}", re.as_str(), if *global { "g" } else { "" }).into_bytes(),
            Value::Bool(b) => b.to_string().into_bytes(),
            Value::Page => b"[object Page]".to_vec(),
            Value::Alert => b"function alert() { [native code] }".to_vec(),
        }
    }
}

pub(super) struct Interp<'a> {
    doc: &'a PageDocument,
    limits: &'a ScriptLimits,
    vars: HashMap<String, Value>,
    steps: usize,
    pub effects: ScriptEffects,
    pub trace: Vec<String>,
}

impl<'a> Interp<'a> {
    pub fn new(doc: &'a PageDocument, limits: &'a ScriptLimits) -> Self {
        Interp { doc, limits, vars: HashMap::new(), steps: 0, effects: ScriptEffects::default(), trace: Vec::new() }
    }

    pub fn run(&mut self, program: &ScriptProgram) -> Result<(), ScriptError> {
        for s in &program.statements {
            self.stmt(s)?;
        }
        Ok(())
    }

    pub fn globals(&self) -> Vec<(String, Vec<u8>)> {
        let mut g: Vec<_> = self.vars.iter().map(|(k, v)| (k.clone(), v.to_text())).collect();
        g.sort();
        g
    }

    fn tick(&mut self) -> Result<(), ScriptError> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(ScriptError::StepLimit(self.limits.max_steps));
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), ScriptError> {
        self.tick()?;
        if self.limits.trace {
            self.trace.push(format!("line {}: {}", s.line, describe(&s.kind)));
        }
        let line = s.line;
        match &s.kind {
            StmtKind::Empty => {}
            StmtKind::Var(name, init) => {
                let v = match init {
                    Some(e) => self.expr(e, line)?,
                    None => Value::Undefined,
                };
                self.vars.insert(name.clone(), v);
            }
            StmtKind::Assign(name, e) => {
                let v = self.expr(e, line)?;
                self.vars.insert(name.clone(), v);
            }
            StmtKind::Increment(name) => {
                let next = match self.lookup(name, line)? {
                    Value::Num(n) => Value::Num(n.saturating_add(1)),
                    other => return Err(type_error(line, format!("cannot increment a {}", other.type_name()))),
                };
                self.vars.insert(name.clone(), next);
            }
            StmtKind::Expr(e) => {
                self.expr(e, line)?;
            }
            StmtKind::Block(body) => {
                for b in body {
                    self.stmt(b)?;
                }
            }
            StmtKind::For { init, cond, update, body } => {
                if let Some(i) = init {
                    self.stmt(i)?;
                }
                let mut iterations = 0;
                loop {
                    if let Some(c) = cond {
                        match self.expr(c, line)? {
                            Value::Bool(true) => {}
                            Value::Bool(false) => break,
                            other => {
                                return Err(type_error(line, format!("loop condition is a {}", other.type_name())))
                            }
                        }
                    }
                    iterations += 1;
                    if iterations > self.limits.max_loop_iterations {
                        return Err(ScriptError::LoopLimit(self.limits.max_loop_iterations));
                    }
                    self.stmt(body)?;
                    if let Some(u) = update {
                        self.stmt(u)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, name: &str, line: usize) -> Result<Value, ScriptError> {
        if let Some(v) = self.vars.get(name) {
            return Ok(v.clone());
        }
        match name {
            "labpage" => Ok(Value::Page),
            "alert" => Ok(Value::Alert),
            "undefined" => Ok(Value::Undefined),
            _ => Err(ScriptError::Reference { line, name: name.to_string() }),
        }
    }

    fn expr(&mut self, e: &Expr, line: usize) -> Result<Value, ScriptError> {
        Ok(match e {
            Expr::Str(s) => Value::Str(s.clone()),
            Expr::Num(n) => Value::Num(*n),
            Expr::Ident(name) => self.lookup(name, line)?,
            Expr::NewRegExp(args) => {
                let vals = self.eval_args(args, line)?;
                let (pattern, flags) = match vals.as_slice() {
                    [p] => (p.to_text(), Vec::new()),
                    [p, f] => (p.to_text(), f.to_text()),
                    _ => return Err(type_error(line, "RegExp takes a pattern and optional flags")),
                };
                let global = match flags.as_slice() {
                    b"" => false,
                    b"g" => true,
                    other => {
                        return Err(type_error(line, format!("unsupported flags {:?}", String::from_utf8_lossy(other))))
                    }
                };
                let pattern = String::from_utf8(pattern).map_err(|_| type_error(line, "pattern is not UTF-8"))?;
                let re = Regex::new(&pattern).map_err(|e| ScriptError::Pattern { line, source: e })?;
                Value::RegExp { re, global }
            }
            Expr::Member(obj, name) => {
                let o = self.expr(obj, line)?;
                match (&o, name.as_str()) {
                    (Value::Str(s), "length") => Value::Num(s.len() as i64),
                    (Value::List(l), "length") => Value::Num(l.len() as i64),
                    (Value::Page, "html") => Value::Str(self.doc.text.clone()),
                    _ => return Err(type_error(line, format!("no property '{name}' on a {}", o.type_name()))),
                }
            }
            Expr::Index(obj, idx) => {
                let o = self.expr(obj, line)?;
                let i = self.expr(idx, line)?;
                let Value::Num(i) = i else {
                    return Err(type_error(line, format!("index is a {}", i.type_name())));
                };
                let i = usize::try_from(i).ok();
                match o {
                    Value::List(l) => i.and_then(|i| l.get(i).cloned()).map_or(Value::Undefined, Value::Str),
                    Value::Str(s) => i.and_then(|i| s.get(i)).map_or(Value::Undefined, |&b| Value::Str(vec![b])),
                    other => return Err(type_error(line, format!("cannot index a {}", other.type_name()))),
                }
            }
            Expr::Call(callee, args) => self.call(callee, args, line)?,
            Expr::Add(a, b) => {
                let a = self.expr(a, line)?;
                let b = self.expr(b, line)?;
                match (&a, &b) {
                    (Value::Num(x), Value::Num(y)) => Value::Num(x.saturating_add(*y)),
                    _ => {
                        let mut s = a.to_text();
                        s.extend_from_slice(&b.to_text());
                        Value::Str(s)
                    }
                }
            }
            Expr::Less(a, b) => {
                let a = self.expr(a, line)?;
                let b = self.expr(b, line)?;
                match (&a, &b) {
                    (Value::Num(x), Value::Num(y)) => Value::Bool(x < y),
                    (Value::Str(x), Value::Str(y)) => Value::Bool(x < y),
                    _ => {
                        return Err(type_error(
                            line,
                            format!("cannot compare {} with {}", a.type_name(), b.type_name()),
                        ))
                    }
                }
            }
        })
    }

    fn eval_args(&mut self, args: &[Expr], line: usize) -> Result<Vec<Value>, ScriptError> {
        args.iter().map(|a| self.expr(a, line)).collect()
    }

    fn call(&mut self, callee: &Expr, args: &[Expr], line: usize) -> Result<Value, ScriptError> {
        if let Expr::Member(obj, method) = callee {
            let o = self.expr(obj, line)?;
            let vals = self.eval_args(args, line)?;
            return match (o, method.as_str(), vals.as_slice()) {
                (Value::Page, "write", [markup]) => {
                    let markup = markup.to_text();
                    self.effects.blind_requests.extend(image_sources(&markup));
                    self.effects.writes.push(markup);
                    Ok(Value::Undefined)
                }
                (Value::Str(s), "match", [Value::RegExp { re, global }]) => {
                    let found: Vec<Vec<u8>> = if *global {
                        re.find_all(&s).into_iter().map(<[u8]>::to_vec).collect()
                    } else {
                        re.find_at(&s, 0).map(|(a, b)| s[a..b].to_vec()).into_iter().collect()
                    };
                    Ok(Value::List(found))
                }
                (o, m, _) => Err(type_error(
                    line,
                    format!("no method '{m}' with {} argument(s) on a {}", vals.len(), o.type_name()),
                )),
            };
        }
        match self.expr(callee, line)? {
            Value::Alert => {
                let vals = self.eval_args(args, line)?;
                let msg = vals.first().map_or_else(|| b"undefined".to_vec(), Value::to_text);
                self.effects.alerts.push(msg);
                Ok(Value::Undefined)
            }
            other => Err(type_error(line, format!("a {} is not callable", other.type_name()))),
        }
    }
}

fn type_error(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError::Type { line, message: message.into() }
}

fn describe(kind: &StmtKind) -> String {
    match kind {
        StmtKind::Var(n, _) => format!("var {n}"),
        StmtKind::Assign(n, _) => format!("{n} ="),
        StmtKind::Increment(n) => format!("{n}++"),
        StmtKind::Expr(Expr::Call(c, _)) => match c.as_ref() {
            Expr::Member(_, m) => format!("call .{m}"),
            Expr::Ident(f) => format!("call {f}"),
            _ => "call".into(),
        },
        StmtKind::Expr(_) => "expression".into(),
        StmtKind::Block(b) => format!("block of {}", b.len()),
        StmtKind::For { .. } => "for".into(),
        StmtKind::Empty => "empty".into(),
    }
}

/// Request URLs implied by `<img src=...>` tags in written markup. The value
/// runs to the first `>` or whitespace; surrounding quotes are dropped.
pub(super) fn image_sources(markup: &[u8]) -> Vec<Vec<u8>> {
    const TAG: &[u8] = b"<img src=";
    let mut out = Vec::new();
    let mut i = 0;
    while i + TAG.len() <= markup.len() {
        if !markup[i..i + TAG.len()].eq_ignore_ascii_case(TAG) {
            i += 1;
            continue;
        }
        let start = i + TAG.len();
        let end = markup[start..]
            .iter()
            .position(|&b| b == b'>' || b.is_ascii_whitespace())
            .map_or(markup.len(), |p| start + p);
        let mut url = &markup[start..end];
        if let [q @ (b'"' | b'\''), rest @ ..] = url {
            url = rest.strip_suffix(&[*q]).unwrap_or(rest);
        }
        out.push(url.to_vec());
        i = end;
    }
    out
}

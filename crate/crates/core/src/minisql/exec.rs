use std::collections::BTreeMap;

use super::ast::{Builtin, CompareOp, DataType, Expr, Select, Statement};
use super::builtins;
use super::db::{CatalogView, Database};
use super::error::{RuntimeError, SqlError};
use super::parser::parse_batch;
use super::value::SqlValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_exec_depth: usize,
    pub step_budget: u64,
    pub max_value_len: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_exec_depth: 8, step_budget: 100_000, max_value_len: 1 << 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchResult {
    pub result_sets: Vec<ResultSet>,
    /// Rows written by UPDATE statements, nested frames included.
    pub mutations: usize,
    /// Top-level statements in the parsed batch.
    pub statements: usize,
    /// Statements executed, nested frames and loop iterations included.
    pub executed: u64,
}

/// A failed batch. Work done before the failure is kept: mutations stay
/// applied and `partial` carries what was produced.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{error}")]
pub struct BatchError {
    pub error: SqlError,
    pub partial: BatchResult,
}

#[derive(Debug, Clone)]
struct Variable {
    ty: DataType,
    value: SqlValue,
}

#[derive(Debug, Clone)]
struct Cursor {
    query: Select,
    rows: Option<Vec<Vec<SqlValue>>>,
    position: usize,
}

#[derive(Debug, Clone, Default)]
struct Frame {
    vars: BTreeMap<String, Variable>,
    cursors: BTreeMap<String, Cursor>,
}

/// Execution state for one connection. Each dynamic EXEC pushes a fresh
/// frame, so inner declarations never leak out.
#[derive(Debug, Clone)]
pub struct ExecContext {
    frames: Vec<Frame>,
    pub fetch_status: i64,
    exec_depth: usize,
    step_budget: u64,
    limits: Limits,
    pub result_sets: Vec<ResultSet>,
    mutations: usize,
    executed: u64,
}

impl Default for ExecContext {
    fn default() -> Self {
        Self::new(Limits::default())
    }
}

impl ExecContext {
    pub fn new(limits: Limits) -> Self {
        ExecContext {
            frames: vec![Frame::default()],
            fetch_status: -1,
            exec_depth: 0,
            step_budget: limits.step_budget,
            limits,
            result_sets: Vec::new(),
            mutations: 0,
            executed: 0,
        }
    }

    pub fn exec_depth(&self) -> usize {
        self.exec_depth
    }

    pub fn step_budget(&self) -> u64 {
        self.step_budget
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    /// Current value of a variable in the innermost frame.
    pub fn variable(&self, name: &str) -> Option<&SqlValue> {
        self.frame().vars.get(&name.to_ascii_lowercase()).map(|v| &v.value)
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, &SqlValue)> {
        self.frame().vars.iter().map(|(k, v)| (k.as_str(), &v.value))
    }

    fn frame(&self) -> &Frame {
        self.frames.last().expect("at least one frame")
    }

    fn frame_mut(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("at least one frame")
    }

    fn check_len(&self, v: SqlValue) -> Result<SqlValue, RuntimeError> {
        if v.byte_len() > self.limits.max_value_len {
            return Err(RuntimeError::ValueTooLarge(self.limits.max_value_len));
        }
        Ok(v)
    }
}

/// Parse and execute a batch. The whole batch is parsed before anything
/// runs, so a syntax error has no effect on `db`.
pub fn exec_batch(db: &mut Database, text: &[u8], ctx: &mut ExecContext) -> Result<BatchResult, BatchError> {
    let sets_before = ctx.result_sets.len();
    let mutations_before = ctx.mutations;
    let executed_before = ctx.executed;
    let mut statements = 0;
    let outcome = parse_batch(text).map_err(SqlError::from).and_then(|stmts| {
        statements = stmts.len();
        let mut run = Runner { db, ctx: &mut *ctx };
        stmts.iter().try_for_each(|s| run.statement(s)).map_err(SqlError::from)
    });
    let result = BatchResult {
        result_sets: ctx.result_sets[sets_before..].to_vec(),
        mutations: ctx.mutations - mutations_before,
        statements,
        executed: ctx.executed - executed_before,
    };
    match outcome {
        Ok(()) => Ok(result),
        Err(error) => Err(BatchError { error, partial: result }),
    }
}

/// Execute `code` as a dynamic batch: same database, fresh variable scope,
/// one level deeper.
pub fn exec_dynamic(db: &mut Database, ctx: &mut ExecContext, code: &SqlValue) -> Result<BatchResult, BatchError> {
    let sets_before = ctx.result_sets.len();
    let mutations_before = ctx.mutations;
    let executed_before = ctx.executed;
    let outcome = Runner { db, ctx: &mut *ctx }.dynamic(code);
    let result = BatchResult {
        result_sets: ctx.result_sets[sets_before..].to_vec(),
        mutations: ctx.mutations - mutations_before,
        statements: 1,
        executed: ctx.executed - executed_before,
    };
    match outcome {
        Ok(()) => Ok(result),
        Err(e) => Err(BatchError { error: e.into(), partial: result }),
    }
}

/// One source in a FROM list, materialized.
struct Source {
    binding: String,
    table: String,
    columns: Vec<String>,
    rows: Vec<Vec<SqlValue>>,
}

/// Column bindings visible to an expression: (binding, table, columns, row).
type RowEnv<'a> = [(&'a str, &'a str, &'a [String], &'a [SqlValue])];

struct Runner<'a> {
    db: &'a mut Database,
    ctx: &'a mut ExecContext,
}

impl Runner<'_> {
    fn tick(&mut self) -> Result<(), RuntimeError> {
        if self.ctx.step_budget == 0 {
            return Err(RuntimeError::BudgetExhausted);
        }
        self.ctx.step_budget -= 1;
        self.ctx.executed += 1;
        Ok(())
    }

    fn dynamic(&mut self, code: &SqlValue) -> Result<(), RuntimeError> {
        let text = match code {
            SqlValue::Null => return Ok(()),
            SqlValue::Text(b) => b,
            other => return Err(RuntimeError::TypeMismatch(format!("EXEC needs varchar, got {}", other.type_name()))),
        };
        if self.ctx.exec_depth >= self.ctx.limits.max_exec_depth {
            return Err(RuntimeError::ExecDepth(self.ctx.limits.max_exec_depth));
        }
        let stmts = parse_batch(text).map_err(RuntimeError::DynamicSyntax)?;
        self.ctx.exec_depth += 1;
        self.ctx.frames.push(Frame::default());
        let outcome = stmts.iter().try_for_each(|s| self.statement(s));
        self.ctx.frames.pop();
        self.ctx.exec_depth -= 1;
        outcome
    }

    fn statement(&mut self, stmt: &Statement) -> Result<(), RuntimeError> {
        self.tick()?;
        match stmt {
            Statement::Declare(vars) => {
                for (name, ty) in vars {
                    let key = name.to_ascii_lowercase();
                    let frame = self.ctx.frame_mut();
                    if frame.vars.contains_key(&key) {
                        return Err(RuntimeError::DuplicateVariable(format!("@{name}")));
                    }
                    frame.vars.insert(key, Variable { ty: *ty, value: SqlValue::Null });
                }
            }
            Statement::Set { var, value } => {
                let v = self.eval(value, &[])?;
                self.assign(var, v)?;
            }
            Statement::Select(sel) => {
                let set = self.select(sel)?;
                self.ctx.result_sets.push(set);
            }
            Statement::Exec(e) => {
                let code = self.eval(e, &[])?;
                self.dynamic(&code)?;
            }
            Statement::Update { table, column, value, filter } => self.update(table, column, value, filter.as_ref())?,
            Statement::DeclareCursor { name, query } => {
                let key = name.to_ascii_lowercase();
                let frame = self.ctx.frame_mut();
                if frame.cursors.contains_key(&key) {
                    return Err(RuntimeError::Cursor(format!("cursor {name} already declared")));
                }
                frame.cursors.insert(key, Cursor { query: query.clone(), rows: None, position: 0 });
            }
            Statement::OpenCursor(name) => {
                let query = {
                    let c = self.cursor(name)?;
                    if c.rows.is_some() {
                        return Err(RuntimeError::Cursor(format!("cursor {name} already open")));
                    }
                    c.query.clone()
                };
                let rows = self.select(&query)?.rows;
                let c = self.cursor(name)?;
                c.rows = Some(rows);
                c.position = 0;
            }
            Statement::FetchNext { cursor, into } => {
                let row = {
                    let c = self.cursor(cursor)?;
                    let rows =
                        c.rows.as_ref().ok_or_else(|| RuntimeError::Cursor(format!("cursor {cursor} not open")))?;
                    let row = rows.get(c.position).cloned();
                    if row.is_some() {
                        c.position += 1;
                    }
                    row
                };
                match row {
                    Some(row) => {
                        if row.len() != into.len() {
                            return Err(RuntimeError::Cursor(format!(
                                "cursor {cursor} yields {} columns, FETCH names {}",
                                row.len(),
                                into.len()
                            )));
                        }
                        for (var, v) in into.iter().zip(row) {
                            self.assign(var, v)?;
                        }
                        self.ctx.fetch_status = 0;
                    }
                    None => self.ctx.fetch_status = -1,
                }
            }
            Statement::While { cond, body } => {
                while self.truth(cond, &[])? == Some(true) {
                    self.statement(body)?;
                }
            }
            Statement::Block(body) => {
                for s in body {
                    self.statement(s)?;
                }
            }
            Statement::CloseCursor(name) => {
                let c = self.cursor(name)?;
                if c.rows.take().is_none() {
                    return Err(RuntimeError::Cursor(format!("cursor {name} not open")));
                }
            }
            Statement::DeallocateCursor(name) => {
                if self.ctx.frame_mut().cursors.remove(&name.to_ascii_lowercase()).is_none() {
                    return Err(RuntimeError::Cursor(format!("cursor {name} not declared")));
                }
            }
        }
        Ok(())
    }

    fn cursor(&mut self, name: &str) -> Result<&mut Cursor, RuntimeError> {
        self.ctx
            .frame_mut()
            .cursors
            .get_mut(&name.to_ascii_lowercase())
            .ok_or_else(|| RuntimeError::Cursor(format!("cursor {name} not declared")))
    }

    fn assign(&mut self, name: &str, value: SqlValue) -> Result<(), RuntimeError> {
        let ty = self
            .ctx
            .frame()
            .vars
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| RuntimeError::UnknownVariable(format!("@{name}")))?
            .ty;
        let value = self.ctx.check_len(coerce(value, ty)?)?;
        let slot = self.ctx.frame_mut().vars.get_mut(&name.to_ascii_lowercase()).expect("checked above");
        slot.value = value;
        Ok(())
    }

    fn sources(&self, sel: &Select) -> Result<Vec<Source>, RuntimeError> {
        sel.from
            .iter()
            .map(|r| {
                let binding = r.binding().to_string();
                if let Some(view) = CatalogView::lookup(&r.name) {
                    return Ok(Source {
                        binding,
                        table: r.name.clone(),
                        columns: view.columns().iter().map(|c| c.to_string()).collect(),
                        rows: self.db.catalog_rows(view),
                    });
                }
                let t = self.db.table(&r.name).ok_or_else(|| RuntimeError::UnknownTable(r.name.clone()))?;
                Ok(Source {
                    binding,
                    table: t.name.clone(),
                    columns: t.columns.iter().map(|c| c.name.clone()).collect(),
                    rows: t.rows.clone(),
                })
            })
            .collect()
    }

    /// Cross join of the FROM sources in order, filtered, projected.
    fn select(&mut self, sel: &Select) -> Result<ResultSet, RuntimeError> {
        let columns = sel.projection.iter().map(projection_name).collect();
        let sources = self.sources(sel)?;
        let mut rows = Vec::new();
        let mut idx = vec![0usize; sources.len()];
        if sources.iter().any(|s| s.rows.is_empty()) {
            return Ok(ResultSet { columns, rows });
        }
        loop {
            let env: Vec<_> = sources
                .iter()
                .zip(&idx)
                .map(|(s, &i)| (s.binding.as_str(), s.table.as_str(), s.columns.as_slice(), s.rows[i].as_slice()))
                .collect();
            let keep = match &sel.filter {
                Some(f) => self.truth(f, &env)? == Some(true),
                None => true,
            };
            if keep {
                let row = sel.projection.iter().map(|e| self.eval(e, &env)).collect::<Result<Vec<_>, _>>()?;
                rows.push(row);
            }
            // Odometer over sources, rightmost fastest.
            let mut k = sources.len();
            loop {
                if k == 0 {
                    return Ok(ResultSet { columns, rows });
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < sources[k].rows.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn update(&mut self, table: &str, column: &str, value: &Expr, filter: Option<&Expr>) -> Result<(), RuntimeError> {
        if CatalogView::lookup(table).is_some() {
            return Err(RuntimeError::Catalog(format!("{table} is read-only")));
        }
        let t = self.db.table(table).ok_or_else(|| RuntimeError::UnknownTable(table.to_string()))?;
        let col = t.column_index(column).ok_or_else(|| RuntimeError::UnknownColumn(column.to_string()))?;
        let def = t.columns[col].clone();
        let names: Vec<String> = t.columns.iter().map(|c| c.name.clone()).collect();
        let table_name = t.name.clone();
        let snapshot = t.rows.clone();
        for (ri, row) in snapshot.iter().enumerate() {
            let env = [(table_name.as_str(), table_name.as_str(), names.as_slice(), row.as_slice())];
            if let Some(f) = filter {
                if self.truth(f, &env)? != Some(true) {
                    continue;
                }
            }
            let v = self.eval(value, &env)?;
            let v = self.ctx.check_len(def.coerce(v)?)?;
            self.db.table_mut(&table_name).expect("table exists").rows[ri][col] = v;
            self.ctx.mutations += 1;
        }
        Ok(())
    }

    /// Three-valued truth of a condition; `None` is unknown.
    fn truth(&mut self, e: &Expr, env: &RowEnv) -> Result<Option<bool>, RuntimeError> {
        match e {
            Expr::Compare { op, lhs, rhs } => {
                let l = self.eval(lhs, env)?;
                let r = self.eval(rhs, env)?;
                let eq = match (&l, &r) {
                    (SqlValue::Null, _) | (_, SqlValue::Null) => return Ok(None),
                    (SqlValue::Int(a), SqlValue::Int(b)) => a == b,
                    (SqlValue::Text(a) | SqlValue::Binary(a), SqlValue::Text(b) | SqlValue::Binary(b)) => a == b,
                    _ => {
                        return Err(RuntimeError::TypeMismatch(format!(
                            "cannot compare {} with {}",
                            l.type_name(),
                            r.type_name()
                        )))
                    }
                };
                Ok(Some(match op {
                    CompareOp::Eq => eq,
                    CompareOp::Ne => !eq,
                }))
            }
            Expr::And(a, b) => {
                let l = self.truth(a, env)?;
                if l == Some(false) {
                    return Ok(Some(false));
                }
                Ok(match (l, self.truth(b, env)?) {
                    (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                })
            }
            Expr::Or(a, b) => {
                let l = self.truth(a, env)?;
                if l == Some(true) {
                    return Ok(Some(true));
                }
                Ok(match (l, self.truth(b, env)?) {
                    (_, Some(true)) => Some(true),
                    (Some(false), Some(false)) => Some(false),
                    _ => None,
                })
            }
            Expr::Not(a) => Ok(self.truth(a, env)?.map(|b| !b)),
            other => Err(RuntimeError::TypeMismatch(format!("expected a condition, got {}", describe(other)))),
        }
    }

    fn eval(&mut self, e: &Expr, env: &RowEnv) -> Result<SqlValue, RuntimeError> {
        match e {
            Expr::StringLit(s) => Ok(SqlValue::Text(s.clone())),
            Expr::HexLit(b) => Ok(SqlValue::Binary(b.clone())),
            Expr::IntLit(n) => Ok(SqlValue::Int(*n)),
            Expr::Null => Ok(SqlValue::Null),
            Expr::Var(v) => self.ctx.variable(v).cloned().ok_or_else(|| RuntimeError::UnknownVariable(format!("@{v}"))),
            Expr::SysVar(v) if v.eq_ignore_ascii_case("fetch_status") => Ok(SqlValue::Int(self.ctx.fetch_status)),
            Expr::SysVar(v) => Err(RuntimeError::UnknownVariable(format!("@@{v}"))),
            Expr::Column { qualifier, name } => column(env, qualifier.as_deref(), name),
            Expr::Concat(a, b) => {
                let l = self.eval(a, env)?;
                let r = self.eval(b, env)?;
                let out = match (l, r) {
                    (SqlValue::Null, _) | (_, SqlValue::Null) => SqlValue::Null,
                    (SqlValue::Int(x), SqlValue::Int(y)) => SqlValue::Int(
                        x.checked_add(y).ok_or_else(|| RuntimeError::TypeMismatch("integer overflow".into()))?,
                    ),
                    (SqlValue::Text(mut x), SqlValue::Text(y)) => {
                        x.extend_from_slice(&y);
                        SqlValue::Text(x)
                    }
                    (SqlValue::Binary(mut x), SqlValue::Binary(y)) => {
                        x.extend_from_slice(&y);
                        SqlValue::Binary(x)
                    }
                    (l, r) => {
                        return Err(RuntimeError::TypeMismatch(format!(
                            "cannot add {} and {}",
                            l.type_name(),
                            r.type_name()
                        )))
                    }
                };
                self.ctx.check_len(out)
            }
            Expr::Func { func, args } => {
                let vals = args.iter().map(|a| self.eval(a, env)).collect::<Result<Vec<_>, _>>()?;
                let out = match func {
                    Builtin::Replace => builtins::replace(&vals[0], &vals[1], &vals[2])?,
                    Builtin::Substring => builtins::substring(&vals[0], &vals[1], &vals[2])?,
                    Builtin::Rtrim => builtins::rtrim(&vals[0])?,
                    Builtin::Ltrim => builtins::ltrim(&vals[0])?,
                    Builtin::Trim => builtins::trim(&vals[0])?,
                    Builtin::Len => builtins::len(&vals[0])?,
                    Builtin::LabHex => builtins::hex_literal(&vals[0], &vals[1])?,
                };
                self.ctx.check_len(out)
            }
            Expr::Cast { expr, to } => {
                let v = self.eval(expr, env)?;
                coerce(v, *to)
            }
            cond => Err(RuntimeError::TypeMismatch(format!("{} used as a value", describe(cond)))),
        }
    }
}

/// Conversion applied by CAST/CONVERT and by assignment to a typed
/// variable.
fn coerce(v: SqlValue, ty: DataType) -> Result<SqlValue, RuntimeError> {
    Ok(match ty {
        DataType::Varchar(Some(n)) => builtins::convert_varchar(n, &v),
        DataType::Varchar(None) | DataType::Text => builtins::cast_varchar(&v),
        DataType::Varbinary(limit) => match builtins::cast_varbinary(&v) {
            SqlValue::Binary(mut b) => {
                if let Some(n) = limit {
                    b.truncate(n);
                }
                SqlValue::Binary(b)
            }
            other => other,
        },
        DataType::Int => match v {
            SqlValue::Int(_) | SqlValue::Null => v,
            SqlValue::Text(ref b) => std::str::from_utf8(b)
                .ok()
                .and_then(|s| s.trim().parse::<i64>().ok())
                .map(SqlValue::Int)
                .ok_or_else(|| RuntimeError::TypeMismatch(format!("cannot convert {v:?} to int")))?,
            SqlValue::Binary(_) => return Err(RuntimeError::TypeMismatch("cannot convert varbinary to int".into())),
        },
    })
}

fn column(env: &RowEnv, qualifier: Option<&str>, name: &str) -> Result<SqlValue, RuntimeError> {
    let mut found = None;
    for (binding, table, cols, row) in env {
        if let Some(q) = qualifier {
            if !q.eq_ignore_ascii_case(binding) && !q.eq_ignore_ascii_case(table) {
                continue;
            }
        }
        if let Some(i) = cols.iter().position(|c| c.eq_ignore_ascii_case(name)) {
            if found.is_some() {
                return Err(RuntimeError::UnknownColumn(format!("{name} is ambiguous")));
            }
            found = Some(row[i].clone());
        }
    }
    found.ok_or_else(|| match qualifier {
        Some(q) => RuntimeError::UnknownColumn(format!("{q}.{name}")),
        None => RuntimeError::UnknownColumn(name.to_string()),
    })
}

fn projection_name(e: &Expr) -> String {
    match e {
        Expr::Column { name, .. } => name.clone(),
        Expr::Var(v) => format!("@{v}"),
        _ => String::new(),
    }
}

fn describe(e: &Expr) -> &'static str {
    match e {
        Expr::StringLit(_) => "string literal",
        Expr::HexLit(_) => "hex literal",
        Expr::IntLit(_) => "integer literal",
        Expr::Null => "NULL",
        Expr::Var(_) | Expr::SysVar(_) => "variable",
        Expr::Column { .. } => "column",
        Expr::Concat(..) => "expression",
        Expr::Func { .. } | Expr::Cast { .. } => "function call",
        _ => "condition",
    }
}

//! Debug rendering of batches and databases for the CLI.

use std::fmt::Write;

use super::ast::{CompareOp, DataType, Expr, Select, Statement};
use super::db::{ColumnType, Database};
use super::value::{hex_lower, SqlValue};

pub fn format_batch(stmts: &[Statement]) -> String {
    let mut out = String::new();
    for s in stmts {
        write_statement(&mut out, s, 0);
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_statement(out: &mut String, s: &Statement, depth: usize) {
    indent(out, depth);
    match s {
        Statement::Declare(vars) => {
            let parts: Vec<String> = vars.iter().map(|(v, t)| format!("@{v} {}", data_type(*t))).collect();
            let _ = writeln!(out, "DECLARE {};", parts.join(", "));
        }
        Statement::Set { var, value } => {
            let _ = writeln!(out, "SET @{var} = {};", expr(value));
        }
        Statement::Select(sel) => {
            let _ = writeln!(out, "{};", select(sel));
        }
        Statement::Exec(e) => {
            let _ = writeln!(out, "EXEC ({});", expr(e));
        }
        Statement::Update { table, column, value, filter } => {
            let _ = write!(out, "UPDATE {table} SET {column} = {}", expr(value));
            if let Some(f) = filter {
                let _ = write!(out, " WHERE {}", expr(f));
            }
            out.push_str(";\n");
        }
        Statement::DeclareCursor { name, query } => {
            let _ = writeln!(out, "DECLARE {name} CURSOR FOR {};", select(query));
        }
        Statement::OpenCursor(c) => {
            let _ = writeln!(out, "OPEN {c};");
        }
        Statement::FetchNext { cursor, into } => {
            let vars: Vec<String> = into.iter().map(|v| format!("@{v}")).collect();
            let _ = writeln!(out, "FETCH NEXT FROM {cursor} INTO {};", vars.join(", "));
        }
        Statement::While { cond, body } => {
            let _ = writeln!(out, "WHILE {}", expr(cond));
            write_statement(out, body, depth + 1);
        }
        Statement::Block(body) => {
            out.push_str("BEGIN\n");
            for b in body {
                write_statement(out, b, depth + 1);
            }
            indent(out, depth);
            out.push_str("END;\n");
        }
        Statement::CloseCursor(c) => {
            let _ = writeln!(out, "CLOSE {c};");
        }
        Statement::DeallocateCursor(c) => {
            let _ = writeln!(out, "DEALLOCATE {c};");
        }
    }
}

fn data_type(t: DataType) -> String {
    let len = |n: Option<usize>| n.map_or("MAX".to_string(), |n| n.to_string());
    match t {
        DataType::Int => "INT".into(),
        DataType::Text => "TEXT".into(),
        DataType::Varchar(n) => format!("VARCHAR({})", len(n)),
        DataType::Varbinary(n) => format!("VARBINARY({})", len(n)),
    }
}

fn select(sel: &Select) -> String {
    let mut s = format!("SELECT {}", sel.projection.iter().map(expr).collect::<Vec<_>>().join(", "));
    if !sel.from.is_empty() {
        let from: Vec<String> = sel
            .from
            .iter()
            .map(|t| match &t.alias {
                Some(a) => format!("{} {a}", t.name),
                None => t.name.clone(),
            })
            .collect();
        let _ = write!(s, " FROM {}", from.join(", "));
    }
    if let Some(f) = &sel.filter {
        let _ = write!(s, " WHERE {}", expr(f));
    }
    s
}

/// Render a string literal, doubling quotes. Bytes outside printable ASCII
/// are shown as `\xNN` since this form is for reading, not re-parsing.
fn quote(bytes: &[u8]) -> String {
    let mut s = String::from("'");
    for &b in bytes {
        match b {
            b'\'' => s.push_str("''"),
            0x20..=0x7e => s.push(b as char),
            _ => {
                let _ = write!(s, "\\x{b:02x}");
            }
        }
    }
    s.push('\'');
    s
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::StringLit(b) => quote(b),
        Expr::HexLit(b) => format!("0x{}", String::from_utf8_lossy(&hex_lower(b))),
        Expr::IntLit(n) => n.to_string(),
        Expr::Null => "NULL".into(),
        Expr::Var(v) => format!("@{v}"),
        Expr::SysVar(v) => format!("@@{v}"),
        Expr::Column { qualifier: Some(q), name } => format!("{q}.{name}"),
        Expr::Column { qualifier: None, name } => name.clone(),
        Expr::Concat(a, b) => format!("{} + {}", expr(a), expr(b)),
        Expr::Func { func, args } => {
            format!("{}({})", func.name(), args.iter().map(expr).collect::<Vec<_>>().join(", "))
        }
        Expr::Cast { expr: inner, to } => format!("CAST({} AS {})", expr(inner), data_type(*to)),
        Expr::Compare { op, lhs, rhs } => {
            let op = match op {
                CompareOp::Eq => "=",
                CompareOp::Ne => "<>",
            };
            format!("{} {op} {}", expr(lhs), expr(rhs))
        }
        Expr::And(a, b) => format!("({} AND {})", expr(a), expr(b)),
        Expr::Or(a, b) => format!("({} OR {})", expr(a), expr(b)),
        Expr::Not(a) => format!("NOT ({})", expr(a)),
    }
}

/// Tables in creation order with their rows. Long values are elided to
/// `max_cell` bytes.
pub fn format_database(db: &Database, max_cell: usize) -> String {
    let mut out = String::new();
    for t in db.tables() {
        let cols: Vec<String> = t
            .columns
            .iter()
            .map(|c| {
                let ty = match c.col_type {
                    ColumnType::Int => "INT".to_string(),
                    ColumnType::Text => "TEXT".to_string(),
                    ColumnType::Varchar(n) => data_type(DataType::Varchar(n)),
                };
                format!("{} {ty}", c.name)
            })
            .collect();
        let _ = writeln!(out, "{} (id={}, {}) [{}]", t.name, t.object_id, t.kind.xtype(), cols.join(", "));
        for row in &t.rows {
            let cells: Vec<String> = row.iter().map(|v| cell(v, max_cell)).collect();
            let _ = writeln!(out, "  | {}", cells.join(" | "));
        }
    }
    out
}

fn cell(v: &SqlValue, max: usize) -> String {
    let raw = v.render();
    let shown = String::from_utf8_lossy(&raw[..raw.len().min(max)]).replace(['\r', '\n'], " ");
    if raw.len() > max {
        format!("{shown}... ({} bytes)", raw.len())
    } else {
        shown
    }
}

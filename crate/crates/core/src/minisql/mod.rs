//! A miniature interpreter for the batch-SQL subset the worm code uses:
//! multi-statement batches, typed variables, dynamic `EXEC`, cursors over
//! the `sysobjects`/`syscolumns` catalog views, and a handful of string
//! and binary builtins.
//!
//! Everything is byte-exact. No encoding or newline normalization happens
//! anywhere in the engine.

mod ast;
pub mod builtins;
mod db;
mod error;
mod exec;
mod lexer;
mod parser;
pub mod pretty;
mod value;

pub use ast::{Builtin, CompareOp, DataType, Expr, Select, Statement, TableRef};
pub use db::{
    CatalogView, ColumnDef, ColumnType, Database, Table, TableKind, XTYPE_INT, XTYPE_TEXT, XTYPE_TEXT_ALIAS,
    XTYPE_VARCHAR,
};
pub use error::{RuntimeError, SqlError, SyntaxError};
pub use exec::{exec_batch, exec_dynamic, BatchError, BatchResult, ExecContext, Limits, ResultSet};
pub use parser::parse_batch;
pub use value::SqlValue;

/// Lowercase hex digits of `bytes`, no prefix.
pub fn to_hex(bytes: &[u8]) -> Vec<u8> {
    value::hex_lower(bytes)
}

/// Inverse of [`to_hex`]; accepts either case.
pub fn from_hex(digits: &[u8]) -> Option<Vec<u8>> {
    value::decode_hex(digits)
}

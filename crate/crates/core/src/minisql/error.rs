use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(offset: usize, message: impl Into<String>) -> Self {
        SyntaxError { offset, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {0} already declared")]
    DuplicateVariable(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("cursor misuse: {0}")]
    Cursor(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("catalog error: {0}")]
    Catalog(String),
    #[error("dynamic exec depth limit {0} exceeded")]
    ExecDepth(usize),
    #[error("statement budget exhausted")]
    BudgetExhausted,
    #[error("value exceeds {0} bytes")]
    ValueTooLarge(usize),
    #[error("syntax error in dynamic code: {0}")]
    DynamicSyntax(SyntaxError),
}

/// Either failure mode of running a batch.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Declared type of a variable or a CAST/CONVERT target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Int,
    Text,
    /// `None` is `MAX`.
    Varchar(Option<usize>),
    Varbinary(Option<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Declare(Vec<(String, DataType)>),
    Set { var: String, value: Expr },
    Select(Select),
    Exec(Expr),
    Update { table: String, column: String, value: Expr, filter: Option<Expr> },
    DeclareCursor { name: String, query: Select },
    OpenCursor(String),
    FetchNext { cursor: String, into: Vec<String> },
    While { cond: Expr, body: Box<Statement> },
    Block(Vec<Statement>),
    CloseCursor(String),
    DeallocateCursor(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Select {
    pub projection: Vec<Expr>,
    pub from: Vec<TableRef>,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRef {
    pub name: String,
    pub alias: Option<String>,
}

impl TableRef {
    pub fn binding(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Replace,
    Substring,
    Rtrim,
    Ltrim,
    Trim,
    Len,
    /// `lab_hex(prefix_flag, bytes)`: hexadecimal text of a byte sequence.
    LabHex,
}

impl Builtin {
    pub fn lookup(name: &str) -> Option<Self> {
        const TABLE: &[(&str, Builtin)] = &[
            ("replace", Builtin::Replace),
            ("substring", Builtin::Substring),
            ("rtrim", Builtin::Rtrim),
            ("ltrim", Builtin::Ltrim),
            ("trim", Builtin::Trim),
            ("len", Builtin::Len),
            ("lab_hex", Builtin::LabHex),
        ];
        TABLE.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, b)| *b)
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Replace | Builtin::Substring => 3,
            Builtin::LabHex => 2,
            Builtin::Rtrim | Builtin::Ltrim | Builtin::Trim | Builtin::Len => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Replace => "replace",
            Builtin::Substring => "substring",
            Builtin::Rtrim => "rtrim",
            Builtin::Ltrim => "ltrim",
            Builtin::Trim => "trim",
            Builtin::Len => "len",
            Builtin::LabHex => "lab_hex",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Decoded content; doubled quotes already collapsed.
    StringLit(Vec<u8>),
    HexLit(Vec<u8>),
    IntLit(i64),
    Null,
    Var(String),
    SysVar(String),
    Column {
        qualifier: Option<String>,
        name: String,
    },
    /// `+`: string/binary concatenation or integer addition.
    Concat(Box<Expr>, Box<Expr>),
    Func {
        func: Builtin,
        args: Vec<Expr>,
    },
    Cast {
        expr: Box<Expr>,
        to: DataType,
    },
    Compare {
        op: CompareOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn is_condition(&self) -> bool {
        matches!(self, Expr::Compare { .. } | Expr::And(..) | Expr::Or(..) | Expr::Not(_))
    }
}

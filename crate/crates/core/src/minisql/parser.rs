//! Recursive-descent parser for the batch dialect.
//!
//! Statements are self-delimiting: `;` is optional and a statement ends
//! wherever the next token cannot continue it, so newline-separated
//! batches parse the same as semicolon-separated ones.

use super::ast::{Builtin, CompareOp, DataType, Expr, Select, Statement, TableRef};
use super::error::SyntaxError;
use super::lexer::{tokenize, Tok, Token};

const RESERVED: &[&str] = &[
    "select",
    "from",
    "where",
    "set",
    "declare",
    "exec",
    "execute",
    "update",
    "open",
    "fetch",
    "while",
    "begin",
    "end",
    "close",
    "deallocate",
    "and",
    "or",
    "not",
    "as",
    "cursor",
    "for",
    "into",
    "next",
    "null",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parse a batch into statements. Empty statements (stray `;`) are
/// skipped.
pub fn parse_batch(text: &[u8]) -> Result<Vec<Statement>, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, end: text.len() };
    let mut out = Vec::new();
    loop {
        p.skip_semis();
        if p.at_end() {
            break;
        }
        out.push(p.statement()?);
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + n).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.offset)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError::new(self.offset(), msg))
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn skip_semis(&mut self) {
        while self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected {}", kw.to_ascii_uppercase()))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Ident(w)) if !is_reserved(w) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn var(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(Tok::Var(v)) => {
                let v = v.clone();
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected @variable"),
        }
    }

    fn statement(&mut self) -> Result<Statement, SyntaxError> {
        let word = match self.peek() {
            Some(Tok::Ident(w)) => w.to_ascii_lowercase(),
            _ => return self.err("expected statement"),
        };
        self.pos += 1;
        match word.as_str() {
            "declare" => self.declare(),
            "set" => {
                let var = self.var()?;
                self.expect(Tok::Eq, "=")?;
                let value = self.expr()?;
                Ok(Statement::Set { var, value })
            }
            "select" => Ok(Statement::Select(self.select_body()?)),
            "exec" | "execute" => {
                self.expect(Tok::LParen, "( after EXEC")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(Statement::Exec(e))
            }
            "update" => {
                let table = self.ident()?;
                self.expect_kw("set")?;
                let column = self.ident()?;
                self.expect(Tok::Eq, "=")?;
                let value = self.expr()?;
                let filter = if self.eat_kw("where") { Some(self.expr()?) } else { None };
                Ok(Statement::Update { table, column, value, filter })
            }
            "open" => Ok(Statement::OpenCursor(self.ident()?)),
            "close" => Ok(Statement::CloseCursor(self.ident()?)),
            "deallocate" => Ok(Statement::DeallocateCursor(self.ident()?)),
            "fetch" => {
                self.expect_kw("next")?;
                self.expect_kw("from")?;
                let cursor = self.ident()?;
                self.expect_kw("into")?;
                let mut into = vec![self.var()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    into.push(self.var()?);
                }
                Ok(Statement::FetchNext { cursor, into })
            }
            "while" => {
                let cond = self.expr()?;
                self.skip_semis();
                if self.at_end() {
                    return self.err("WHILE without body");
                }
                let body = self.statement()?;
                Ok(Statement::While { cond, body: Box::new(body) })
            }
            "begin" => {
                let mut body = Vec::new();
                loop {
                    self.skip_semis();
                    if self.eat_kw("end") {
                        break;
                    }
                    if self.at_end() {
                        return self.err("BEGIN without END");
                    }
                    body.push(self.statement()?);
                }
                Ok(Statement::Block(body))
            }
            _ => {
                self.pos -= 1;
                self.err(format!("unsupported statement {word}"))
            }
        }
    }

    fn declare(&mut self) -> Result<Statement, SyntaxError> {
        if let Some(Tok::Ident(_)) = self.peek() {
            let name = self.ident()?;
            self.expect_kw("cursor")?;
            self.expect_kw("for")?;
            self.expect_kw("select")?;
            let query = self.select_body()?;
            return Ok(Statement::DeclareCursor { name, query });
        }
        let mut vars = Vec::new();
        loop {
            let v = self.var()?;
            self.eat_kw("as");
            let ty = self.data_type()?;
            vars.push((v, ty));
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(Statement::Declare(vars))
    }

    fn data_type(&mut self) -> Result<DataType, SyntaxError> {
        let word = match self.peek() {
            Some(Tok::Ident(w)) => w.to_ascii_lowercase(),
            _ => return self.err("expected type"),
        };
        self.pos += 1;
        match word.as_str() {
            "int" => Ok(DataType::Int),
            "text" => Ok(DataType::Text),
            "varchar" => Ok(DataType::Varchar(self.length_spec()?)),
            "varbinary" => Ok(DataType::Varbinary(self.length_spec()?)),
            _ => {
                self.pos -= 1;
                self.err(format!("unsupported type {word}"))
            }
        }
    }

    fn length_spec(&mut self) -> Result<Option<usize>, SyntaxError> {
        self.expect(Tok::LParen, "( after type")?;
        let len = match self.bump() {
            Some(Tok::Ident(w)) if w.eq_ignore_ascii_case("max") => None,
            Some(Tok::Int(n)) if n > 0 => Some(n as usize),
            _ => {
                self.pos -= 1;
                return self.err("expected positive length or MAX");
            }
        };
        self.expect(Tok::RParen, ")")?;
        Ok(len)
    }

    fn select_body(&mut self) -> Result<Select, SyntaxError> {
        let mut projection = vec![self.expr()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            projection.push(self.expr()?);
        }
        let mut from = Vec::new();
        if self.eat_kw("from") {
            loop {
                let name = self.ident()?;
                let alias = if self.eat_kw("as") || matches!(self.peek(), Some(Tok::Ident(w)) if !is_reserved(w)) {
                    Some(self.ident()?)
                } else {
                    None
                };
                from.push(TableRef { name, alias });
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        let filter = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        Ok(Select { projection, from, filter })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Eq) => CompareOp::Eq,
            Some(Tok::Ne) => CompareOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        Ok(Expr::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.primary()?;
        while self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
            let rhs = self.primary()?;
            lhs = Expr::Concat(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let start = self.pos;
        match self.bump() {
            Some(Tok::Str(s)) => Ok(Expr::StringLit(s)),
            Some(Tok::Hex(b)) => Ok(Expr::HexLit(b)),
            Some(Tok::Int(n)) => Ok(Expr::IntLit(n)),
            Some(Tok::Minus) => match self.bump() {
                Some(Tok::Int(n)) => Ok(Expr::IntLit(-n)),
                _ => {
                    self.pos = start;
                    self.err("expected integer after -")
                }
            },
            Some(Tok::Var(v)) => Ok(Expr::Var(v)),
            Some(Tok::SysVar(v)) => Ok(Expr::SysVar(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(e)
            }
            Some(Tok::Ident(w)) => {
                if w.eq_ignore_ascii_case("null") {
                    return Ok(Expr::Null);
                }
                if is_reserved(&w) {
                    self.pos = start;
                    return self.err(format!("unexpected keyword {w}"));
                }
                if self.peek() == Some(&Tok::LParen) {
                    return self.call(&w, start);
                }
                if self.peek() == Some(&Tok::Dot) {
                    if let Some(Tok::Ident(_)) = self.peek_at(1) {
                        self.pos += 1;
                        let name = self.ident()?;
                        return Ok(Expr::Column { qualifier: Some(w), name });
                    }
                    return self.err("expected column name after .");
                }
                Ok(Expr::Column { qualifier: None, name: w })
            }
            _ => {
                self.pos = start;
                self.err("expected expression")
            }
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Expr, SyntaxError> {
        self.expect(Tok::LParen, "(")?;
        if name.eq_ignore_ascii_case("cast") {
            let e = self.expr()?;
            self.expect_kw("as")?;
            let to = self.data_type()?;
            self.expect(Tok::RParen, ")")?;
            return Ok(Expr::Cast { expr: Box::new(e), to });
        }
        if name.eq_ignore_ascii_case("convert") {
            let to = self.data_type()?;
            self.expect(Tok::Comma, ",")?;
            let e = self.expr()?;
            self.expect(Tok::RParen, ")")?;
            return Ok(Expr::Cast { expr: Box::new(e), to });
        }
        let Some(func) = Builtin::lookup(name) else {
            self.pos = start;
            return self.err(format!("unknown function {name}"));
        };
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            args.push(self.expr()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen, ")")?;
        if args.len() != func.arity() {
            self.pos = start;
            return self.err(format!("{} takes {} arguments", func.name(), func.arity()));
        }
        Ok(Expr::Func { func, args })
    }
}

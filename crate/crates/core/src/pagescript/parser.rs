//! Lexer and parser for the script subset.

use super::ScriptError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(i64),
    Str(Vec<u8>),
    Punct(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
}

const PUNCTS: &[&str] = &["++", "(", ")", "{", "}", "[", "]", ";", ",", ".", "=", "+", "<"];
const RESERVED: &[&str] = &[
    "function", "while", "do", "if", "else", "return", "this", "delete", "typeof", "in", "of", "with", "eval",
    "import", "class", "let", "const", "try", "catch", "throw", "switch",
];

fn lex(src: &[u8]) -> Result<Vec<Token>, ScriptError> {
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < src.len() {
        let c = src[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with(b"//") {
            while i < src.len() && src[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with(b"/*") {
            let Some(end) = src[i + 2..].windows(2).position(|w| w == b"*/") else {
                return Err(ScriptError::Syntax { line, message: "unterminated comment".into() });
            };
            line += src[i..i + 2 + end].iter().filter(|&&b| b == b'\n').count();
            i += end + 4;
            continue;
        }
        if c == b'"' || c == b'\'' {
            let (s, next) = lex_string(src, i, line)?;
            out.push(Token { tok: Tok::Str(s), line });
            i = next;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < src.len() && src[i].is_ascii_digit() {
                i += 1;
            }
            if i < src.len()
                && (src[i] == b'.' && src.get(i + 1).is_some_and(u8::is_ascii_digit) || src[i].is_ascii_alphabetic())
            {
                return Err(ScriptError::Syntax { line, message: "only integer literals are supported".into() });
            }
            let text = std::str::from_utf8(&src[start..i]).unwrap_or_default();
            let n = text
                .parse()
                .map_err(|_| ScriptError::Syntax { line, message: format!("number out of range: {text}") })?;
            out.push(Token { tok: Tok::Num(n), line });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
            let start = i;
            while i < src.len() && (src[i].is_ascii_alphanumeric() || src[i] == b'_' || src[i] == b'$') {
                i += 1;
            }
            let word = String::from_utf8_lossy(&src[start..i]).into_owned();
            out.push(Token { tok: Tok::Ident(word), line });
            continue;
        }
        let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(p.as_bytes())) else {
            return Err(ScriptError::Syntax { line, message: format!("unexpected byte 0x{c:02x}") });
        };
        out.push(Token { tok: Tok::Punct(p), line });
        i += p.len();
    }
    Ok(out)
}

fn lex_string(src: &[u8], open: usize, line: usize) -> Result<(Vec<u8>, usize), ScriptError> {
    let quote = src[open];
    let mut s = Vec::new();
    let mut i = open + 1;
    loop {
        let Some(&c) = src.get(i) else {
            return Err(ScriptError::Syntax { line, message: "unterminated string".into() });
        };
        match c {
            b'\r' | b'\n' => return Err(ScriptError::Syntax { line, message: "line break inside string".into() }),
            b'\\' => {
                let Some(&e) = src.get(i + 1) else {
                    return Err(ScriptError::Syntax { line, message: "unterminated string".into() });
                };
                s.push(match e {
                    b'n' => b'\n',
                    b'r' => b'\r',
                    b't' => b'\t',
                    b'\r' | b'\n' => {
                        return Err(ScriptError::Syntax { line, message: "line continuation in string".into() })
                    }
                    other => other,
                });
                i += 2;
            }
            c if c == quote => return Ok((s, i + 1)),
            c => {
                s.push(c);
                i += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Str(Vec<u8>),
    Num(i64),
    Ident(String),
    NewRegExp(Vec<Expr>),
    Member(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Less(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Var(String, Option<Expr>),
    Assign(String, Expr),
    Increment(String),
    Expr(Expr),
    Block(Vec<Stmt>),
    For { init: Option<Box<Stmt>>, cond: Option<Expr>, update: Option<Box<Stmt>>, body: Box<Stmt> },
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: usize,
    pub kind: StmtKind,
}

/// A parsed script, ready to run against any number of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptProgram {
    pub statements: Vec<Stmt>,
}

pub fn parse_script(src: &[u8]) -> Result<ScriptProgram, ScriptError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, loop_depth: 0 };
    let mut statements = Vec::new();
    while p.pos < p.toks.len() {
        statements.push(p.statement()?);
    }
    Ok(ScriptProgram { statements })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    loop_depth: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map_or(1, |t| t.line)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ScriptError> {
        Err(ScriptError::Syntax { line: self.line(), message: message.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ScriptError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.err(format!("expected '{p}'"))
        }
    }

    /// A semicolon, or a point where one is implied: end of input, a closing
    /// brace, or a line break.
    fn end_statement(&mut self) -> Result<(), ScriptError> {
        if self.eat_punct(";") || self.pos >= self.toks.len() || self.is_punct("}") {
            return Ok(());
        }
        if self.pos > 0 && self.toks[self.pos].line > self.toks[self.pos - 1].line {
            return Ok(());
        }
        self.err("expected ';'")
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == w)
    }

    fn ident(&mut self) -> Result<String, ScriptError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !RESERVED.contains(&s.as_str()) && s != "var" && s != "for" && s != "new" => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn statement(&mut self) -> Result<Stmt, ScriptError> {
        let line = self.line();
        if let Some(Tok::Ident(w)) = self.peek() {
            if RESERVED.contains(&w.as_str()) {
                return self.err(format!("'{w}' is outside the supported subset"));
            }
        }
        let kind = if self.eat_punct(";") {
            StmtKind::Empty
        } else if self.eat_punct("{") {
            let mut body = Vec::new();
            while !self.eat_punct("}") {
                if self.pos >= self.toks.len() {
                    return self.err("unterminated block");
                }
                body.push(self.statement()?);
            }
            StmtKind::Block(body)
        } else if self.is_word("for") {
            self.pos += 1;
            return self.for_loop(line);
        } else {
            let s = self.simple()?;
            self.end_statement()?;
            s
        };
        Ok(Stmt { line, kind })
    }

    /// Declarations, assignments, increments and expression statements,
    /// without the trailing semicolon.
    fn simple(&mut self) -> Result<StmtKind, ScriptError> {
        if self.is_word("var") {
            self.pos += 1;
            let name = self.ident()?;
            let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
            return Ok(StmtKind::Var(name, init));
        }
        let e = self.expr()?;
        if let Expr::Ident(name) = &e {
            if self.eat_punct("=") {
                return Ok(StmtKind::Assign(name.clone(), self.expr()?));
            }
            if self.eat_punct("++") {
                return Ok(StmtKind::Increment(name.clone()));
            }
        }
        if self.is_punct("=") || self.is_punct("++") {
            return self.err("only plain variables can be assigned");
        }
        Ok(StmtKind::Expr(e))
    }

    fn for_loop(&mut self, line: usize) -> Result<Stmt, ScriptError> {
        if self.loop_depth > 0 {
            return self.err("nested loops are outside the supported subset");
        }
        self.expect_punct("(")?;
        let init = if self.is_punct(";") { None } else { Some(Box::new(Stmt { line, kind: self.simple()? })) };
        self.expect_punct(";")?;
        let cond = if self.is_punct(";") { None } else { Some(self.expr()?) };
        self.expect_punct(";")?;
        let update = if self.is_punct(")") { None } else { Some(Box::new(Stmt { line, kind: self.simple()? })) };
        self.expect_punct(")")?;
        self.loop_depth += 1;
        let body = self.statement();
        self.loop_depth -= 1;
        Ok(Stmt { line, kind: StmtKind::For { init, cond, update, body: Box::new(body?) } })
    }

    fn expr(&mut self) -> Result<Expr, ScriptError> {
        let lhs = self.additive()?;
        if self.eat_punct("<") {
            let rhs = self.additive()?;
            return Ok(Expr::Less(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, ScriptError> {
        let mut lhs = self.postfix()?;
        while self.eat_punct("+") {
            let rhs = self.postfix()?;
            lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Expr, ScriptError> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct(".") {
                let name = self.ident()?;
                e = Expr::Member(Box::new(e), name);
            } else if self.eat_punct("[") {
                let idx = self.expr()?;
                self.expect_punct("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if self.eat_punct("(") {
                let args = self.args()?;
                e = Expr::Call(Box::new(e), args);
            } else {
                return Ok(e);
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ScriptError> {
        let mut args = Vec::new();
        if self.eat_punct(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(")") {
                return Ok(args);
            }
            self.expect_punct(",")?;
        }
    }

    fn primary(&mut self) -> Result<Expr, ScriptError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Str(s))
            }
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n))
            }
            Some(Tok::Punct("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Some(Tok::Ident(w)) if w == "new" => {
                self.pos += 1;
                if !self.is_word("RegExp") {
                    return self.err("only RegExp can be constructed");
                }
                self.pos += 1;
                self.expect_punct("(")?;
                Ok(Expr::NewRegExp(self.args()?))
            }
            Some(Tok::Ident(_)) => Ok(Expr::Ident(self.ident()?)),
            _ => self.err("expected expression"),
        }
    }
}

use super::error::SyntaxError;
use super::value::decode_hex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    /// `@name`, stored without the sigil.
    Var(String),
    /// `@@name`, stored without the sigils.
    SysVar(String),
    Str(Vec<u8>),
    Hex(Vec<u8>),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
    Eq,
    Ne,
    Plus,
    Minus,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

pub(crate) fn tokenize(src: &[u8]) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'-' if src.get(i + 1) == Some(&b'-') => {
                while i < src.len() && src[i] != b'\n' {
                    i += 1;
                }
            }
            b'\'' => {
                i += 1;
                let mut buf = Vec::new();
                loop {
                    match src.get(i) {
                        None => return Err(SyntaxError::new(start, "unterminated string literal")),
                        Some(b'\'') if src.get(i + 1) == Some(&b'\'') => {
                            buf.push(b'\'');
                            i += 2;
                        }
                        Some(b'\'') => {
                            i += 1;
                            break;
                        }
                        Some(&b) => {
                            buf.push(b);
                            i += 1;
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(buf), offset: start });
            }
            b'0' if matches!(src.get(i + 1), Some(b'x' | b'X')) => {
                i += 2;
                let digits_start = i;
                while i < src.len() && src[i].is_ascii_hexdigit() {
                    i += 1;
                }
                let bytes = decode_hex(&src[digits_start..i])
                    .ok_or_else(|| SyntaxError::new(start, "hex literal needs an even number of digits"))?;
                if i < src.len() && is_ident_char(src[i]) {
                    return Err(SyntaxError::new(i, "malformed hex literal"));
                }
                out.push(Token { tok: Tok::Hex(bytes), offset: start });
            }
            b'0'..=b'9' => {
                while i < src.len() && src[i].is_ascii_digit() {
                    i += 1;
                }
                let text = std::str::from_utf8(&src[start..i]).expect("ascii digits");
                let n = text.parse::<i64>().map_err(|_| SyntaxError::new(start, "integer literal out of range"))?;
                if i < src.len() && is_ident_start(src[i]) {
                    return Err(SyntaxError::new(i, "malformed number"));
                }
                out.push(Token { tok: Tok::Int(n), offset: start });
            }
            b'@' => {
                let sys = src.get(i + 1) == Some(&b'@');
                i += if sys { 2 } else { 1 };
                let name_start = i;
                while i < src.len() && is_ident_char(src[i]) {
                    i += 1;
                }
                if i == name_start {
                    return Err(SyntaxError::new(start, "empty variable name"));
                }
                let name = String::from_utf8_lossy(&src[name_start..i]).into_owned();
                out.push(Token { tok: if sys { Tok::SysVar(name) } else { Tok::Var(name) }, offset: start });
            }
            c if is_ident_start(c) => {
                while i < src.len() && is_ident_char(src[i]) {
                    i += 1;
                }
                let name = String::from_utf8_lossy(&src[start..i]).into_owned();
                out.push(Token { tok: Tok::Ident(name), offset: start });
            }
            _ => {
                let (tok, len) = match (c, src.get(i + 1)) {
                    (b'<', Some(b'>')) | (b'!', Some(b'=')) => (Tok::Ne, 2),
                    (b'(', _) => (Tok::LParen, 1),
                    (b')', _) => (Tok::RParen, 1),
                    (b',', _) => (Tok::Comma, 1),
                    (b';', _) => (Tok::Semi, 1),
                    (b'.', _) => (Tok::Dot, 1),
                    (b'=', _) => (Tok::Eq, 1),
                    (b'+', _) => (Tok::Plus, 1),
                    (b'-', _) => (Tok::Minus, 1),
                    _ => return Err(SyntaxError::new(start, format!("unexpected byte 0x{c:02x}"))),
                };
                i += len;
                out.push(Token { tok, offset: start });
            }
        }
    }
    Ok(out)
}

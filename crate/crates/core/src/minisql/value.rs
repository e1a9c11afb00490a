use std::fmt;

/// A runtime value. Text and Binary are both raw byte sequences; no
/// character encoding is ever applied.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum SqlValue {
    Int(i64),
    Text(Vec<u8>),
    Binary(Vec<u8>),
    Null,
}

impl SqlValue {
    pub fn text(s: impl AsRef<[u8]>) -> Self {
        SqlValue::Text(s.as_ref().to_vec())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, SqlValue::Null)
    }

    /// Bytes of a Text or Binary value.
    pub fn bytes(&self) -> Option<&[u8]> {
        match self {
            SqlValue::Text(b) | SqlValue::Binary(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            SqlValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            SqlValue::Int(_) => "int",
            SqlValue::Text(_) => "varchar",
            SqlValue::Binary(_) => "varbinary",
            SqlValue::Null => "null",
        }
    }

    pub fn byte_len(&self) -> usize {
        self.bytes().map_or(0, <[u8]>::len)
    }

    /// Rendering used by result-set printers and page templates.
    pub fn render(&self) -> Vec<u8> {
        match self {
            SqlValue::Int(i) => i.to_string().into_bytes(),
            SqlValue::Text(b) => b.clone(),
            SqlValue::Binary(b) => {
                let mut out = b"0x".to_vec();
                out.extend(hex_lower(b));
                out
            }
            SqlValue::Null => Vec::new(),
        }
    }
}

impl fmt::Debug for SqlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqlValue::Int(i) => write!(f, "Int({i})"),
            SqlValue::Text(b) => write!(f, "Text({:?})", String::from_utf8_lossy(b)),
            SqlValue::Binary(b) => write!(f, "Binary({} bytes)", b.len()),
            SqlValue::Null => f.write_str("Null"),
        }
    }
}

impl From<i64> for SqlValue {
    fn from(i: i64) -> Self {
        SqlValue::Int(i)
    }
}

impl From<&str> for SqlValue {
    fn from(s: &str) -> Self {
        SqlValue::text(s)
    }
}

pub(crate) fn hex_lower(bytes: &[u8]) -> Vec<u8> {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut out = Vec::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(DIGITS[(b >> 4) as usize]);
        out.push(DIGITS[(b & 0x0f) as usize]);
    }
    out
}

/// Decode an even-length run of hex digits (either case).
pub(crate) fn decode_hex(digits: &[u8]) -> Option<Vec<u8>> {
    if !digits.len().is_multiple_of(2) {
        return None;
    }
    fn nibble(c: u8) -> Option<u8> {
        match c {
            b'0'..=b'9' => Some(c - b'0'),
            b'a'..=b'f' => Some(c - b'a' + 10),
            b'A'..=b'F' => Some(c - b'A' + 10),
            _ => None,
        }
    }
    digits.chunks(2).map(|p| Some(nibble(p[0])? << 4 | nibble(p[1])?)).collect()
}

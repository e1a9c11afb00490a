//! Pure string/binary builtins. Every function propagates Null.

use super::error::RuntimeError;
use super::value::{hex_lower, SqlValue};

fn bytes_arg<'a>(func: &str, v: &'a SqlValue) -> Result<&'a [u8], RuntimeError> {
    v.bytes().ok_or_else(|| RuntimeError::TypeMismatch(format!("{func} expects a string, got {}", v.type_name())))
}

fn int_arg(func: &str, v: &SqlValue) -> Result<i64, RuntimeError> {
    v.as_int().ok_or_else(|| RuntimeError::TypeMismatch(format!("{func} expects an int, got {}", v.type_name())))
}

pub(crate) fn replace_bytes(hay: &[u8], from: &[u8], to: &[u8]) -> Vec<u8> {
    if from.is_empty() {
        return hay.to_vec();
    }
    let mut out = Vec::with_capacity(hay.len());
    let mut i = 0;
    while i < hay.len() {
        if hay[i..].starts_with(from) {
            out.extend_from_slice(to);
            i += from.len();
        } else {
            out.push(hay[i]);
            i += 1;
        }
    }
    out
}

/// Global, non-overlapping replacement.
pub fn replace(s: &SqlValue, from: &SqlValue, to: &SqlValue) -> Result<SqlValue, RuntimeError> {
    if s.is_null() || from.is_null() || to.is_null() {
        return Ok(SqlValue::Null);
    }
    let out = replace_bytes(bytes_arg("replace", s)?, bytes_arg("replace", from)?, bytes_arg("replace", to)?);
    Ok(SqlValue::Text(out))
}

/// 1-based substring; the result keeps the variant of `s`.
pub fn substring(s: &SqlValue, start: &SqlValue, len: &SqlValue) -> Result<SqlValue, RuntimeError> {
    if s.is_null() || start.is_null() || len.is_null() {
        return Ok(SqlValue::Null);
    }
    let bytes = bytes_arg("substring", s)?;
    let start = int_arg("substring", start)?;
    let len = int_arg("substring", len)?;
    if len < 0 {
        return Err(RuntimeError::TypeMismatch("substring length must be non-negative".into()));
    }
    // The window [start, start+len) in 1-based positions, clipped to the value.
    let lo = start.max(1);
    let hi = start.saturating_add(len).min(bytes.len() as i64 + 1);
    let slice = if hi > lo { &bytes[(lo - 1) as usize..(hi - 1) as usize] } else { &[][..] };
    Ok(match s {
        SqlValue::Binary(_) => SqlValue::Binary(slice.to_vec()),
        _ => SqlValue::Text(slice.to_vec()),
    })
}

fn trim_with(v: &SqlValue, func: &str, left: bool, right: bool) -> Result<SqlValue, RuntimeError> {
    if v.is_null() {
        return Ok(SqlValue::Null);
    }
    let mut b = bytes_arg(func, v)?;
    while left && b.first() == Some(&b' ') {
        b = &b[1..];
    }
    while right && b.last() == Some(&b' ') {
        b = &b[..b.len() - 1];
    }
    Ok(SqlValue::Text(b.to_vec()))
}

pub fn rtrim(v: &SqlValue) -> Result<SqlValue, RuntimeError> {
    trim_with(v, "rtrim", false, true)
}

pub fn ltrim(v: &SqlValue) -> Result<SqlValue, RuntimeError> {
    trim_with(v, "ltrim", true, false)
}

pub fn trim(v: &SqlValue) -> Result<SqlValue, RuntimeError> {
    trim_with(v, "trim", true, true)
}

pub fn len(v: &SqlValue) -> Result<SqlValue, RuntimeError> {
    if v.is_null() {
        return Ok(SqlValue::Null);
    }
    Ok(SqlValue::Int(bytes_arg("len", v)?.len() as i64))
}

/// Text form of a value: identity on bytes, decimal for integers.
pub fn cast_varchar(v: &SqlValue) -> SqlValue {
    match v {
        SqlValue::Null => SqlValue::Null,
        SqlValue::Int(i) => SqlValue::Text(i.to_string().into_bytes()),
        SqlValue::Text(b) | SqlValue::Binary(b) => SqlValue::Text(b.clone()),
    }
}

pub fn cast_varbinary(v: &SqlValue) -> SqlValue {
    match v {
        SqlValue::Null => SqlValue::Null,
        SqlValue::Int(i) => SqlValue::Binary(i.to_be_bytes().to_vec()),
        SqlValue::Text(b) | SqlValue::Binary(b) => SqlValue::Binary(b.clone()),
    }
}

pub fn convert_varchar(n: usize, v: &SqlValue) -> SqlValue {
    match cast_varchar(v) {
        SqlValue::Text(mut b) => {
            b.truncate(n);
            SqlValue::Text(b)
        }
        other => other,
    }
}

/// Hexadecimal text of `bytes`: two lowercase digits per byte, with a
/// `0x` prefix when `prefix_flag` is 1.
pub fn hex_literal(prefix_flag: &SqlValue, bytes: &SqlValue) -> Result<SqlValue, RuntimeError> {
    if prefix_flag.is_null() || bytes.is_null() {
        return Ok(SqlValue::Null);
    }
    let flag = int_arg("lab_hex", prefix_flag)?;
    let b = bytes_arg("lab_hex", bytes)?;
    let mut out = if flag == 1 { b"0x".to_vec() } else { Vec::new() };
    out.extend(hex_lower(b));
    Ok(SqlValue::Text(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> SqlValue {
        SqlValue::text(s)
    }

    #[test]
    fn hex_of_ascii() {
        assert_eq!(hex_literal(&SqlValue::Int(1), &t("AB")).unwrap(), t("0x4142"));
        assert_eq!(hex_literal(&SqlValue::Int(0), &t("AB")).unwrap(), t("4142"));
        assert_eq!(hex_literal(&SqlValue::Int(1), &SqlValue::Binary(vec![])).unwrap(), t("0x"));
    }

    #[test]
    fn substring_is_one_based() {
        assert_eq!(substring(&t("hello"), &1.into(), &3.into()).unwrap(), t("hel"));
        assert_eq!(substring(&t("hello"), &2.into(), &3.into()).unwrap(), t("ell"));
        assert_eq!(substring(&t("hello"), &9.into(), &3.into()).unwrap(), t(""));
        assert_eq!(substring(&t("hello"), &0.into(), &2.into()).unwrap(), t("h"));
        let bin = substring(&SqlValue::Binary(b"hello".to_vec()), &4.into(), &10.into()).unwrap();
        assert_eq!(bin, SqlValue::Binary(b"lo".to_vec()));
        assert!(substring(&t("x"), &1.into(), &(-1).into()).is_err());
    }

    #[test]
    fn replace_is_global() {
        assert_eq!(replace(&t("SEM1-x-SEM1"), &t("SEM1"), &t("0x00")).unwrap(), t("0x00-x-0x00"));
        assert_eq!(replace(&t("a'b"), &t("'"), &t("''")).unwrap(), t("a''b"));
        assert_eq!(replace(&t("abc"), &t(""), &t("z")).unwrap(), t("abc"));
    }

    #[test]
    fn convert_truncates() {
        let long = "x".repeat(300);
        let out = convert_varchar(255, &t(&long));
        assert_eq!(out.byte_len(), 255);
        assert_eq!(convert_varchar(255, &t("short")), t("short"));
    }

    #[test]
    fn trims_and_nulls() {
        assert_eq!(rtrim(&t("  a  ")).unwrap(), t("  a"));
        assert_eq!(trim(&t("  a  ")).unwrap(), t("a"));
        assert_eq!(ltrim(&t("  a ")).unwrap(), t("a "));
        assert_eq!(rtrim(&SqlValue::Null).unwrap(), SqlValue::Null);
        assert_eq!(replace(&SqlValue::Null, &t("a"), &t("b")).unwrap(), SqlValue::Null);
        assert!(rtrim(&SqlValue::Int(3)).is_err());
    }

    #[test]
    fn casts_are_identity_on_bytes() {
        let raw = SqlValue::Binary(vec![0, 255, b'\'']);
        assert_eq!(cast_varbinary(&cast_varchar(&raw)), raw);
    }
}

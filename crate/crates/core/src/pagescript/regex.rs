//! Byte-oriented regular expressions: literals, escapes, `.`, bracket
//! classes and the `+ * ?` quantifiers. No groups, alternation or anchors.
//!
//! Patterns compile to a small instruction list run by a Pike VM, which
//! gives leftmost-first greedy matches (the same answers a backtracking
//! engine would give) in O(text × program) time.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pattern error at {offset}: {message}")]
pub struct PatternError {
    pub offset: usize,
    pub message: String,
}

fn perr<T>(offset: usize, message: impl Into<String>) -> Result<T, PatternError> {
    Err(PatternError { offset, message: message.into() })
}

#[derive(Debug, Clone)]
enum Inst {
    Byte(u8),
    Class(Box<[bool; 256]>),
    Any,
    /// Try the first target before the second.
    Split(usize, usize),
    Jmp(usize),
    Match,
}

#[derive(Debug, Clone)]
pub struct Regex {
    source: String,
    prog: Vec<Inst>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quant {
    One,
    Plus,
    Star,
    Opt,
}

impl Regex {
    pub fn new(pattern: &str) -> Result<Self, PatternError> {
        let p = pattern.as_bytes();
        let mut prog = Vec::new();
        let mut i = 0;
        while i < p.len() {
            let start = i;
            let atom = match p[i] {
                b'[' => {
                    let (class, next) = parse_class(p, i)?;
                    i = next;
                    Inst::Class(class)
                }
                b'\\' => {
                    let Some(&c) = p.get(i + 1) else {
                        return perr(i, "trailing backslash");
                    };
                    i += 2;
                    escape_atom(c, start)?
                }
                b'.' => {
                    i += 1;
                    Inst::Any
                }
                b'(' | b')' | b'|' | b'{' | b'}' | b'^' | b'$' => {
                    return perr(i, format!("unsupported construct {:?}", p[i] as char));
                }
                b'+' | b'*' | b'?' => return perr(i, "quantifier without operand"),
                c => {
                    i += 1;
                    Inst::Byte(c)
                }
            };
            let quant = match p.get(i) {
                Some(b'+') => Quant::Plus,
                Some(b'*') => Quant::Star,
                Some(b'?') => Quant::Opt,
                _ => Quant::One,
            };
            if quant != Quant::One {
                i += 1;
                if matches!(p.get(i), Some(b'+' | b'*' | b'?')) {
                    return perr(i, "stacked quantifiers are not supported");
                }
            }
            let l = prog.len();
            match quant {
                Quant::One => prog.push(atom),
                Quant::Plus => {
                    prog.push(atom);
                    prog.push(Inst::Split(l, l + 2));
                }
                Quant::Star => {
                    prog.push(Inst::Split(l + 1, l + 3));
                    prog.push(atom);
                    prog.push(Inst::Jmp(l));
                }
                Quant::Opt => {
                    prog.push(Inst::Split(l + 1, l + 2));
                    prog.push(atom);
                }
            }
        }
        prog.push(Inst::Match);
        Ok(Regex { source: pattern.to_string(), prog })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Leftmost-first match starting at or after `from`, as a byte range.
    pub fn find_at(&self, text: &[u8], from: usize) -> Option<(usize, usize)> {
        let n = self.prog.len();
        // Each thread carries the start offset of its match attempt.
        let mut clist: Vec<(usize, usize)> = Vec::with_capacity(n);
        let mut nlist: Vec<(usize, usize)> = Vec::with_capacity(n);
        let mut mark = vec![usize::MAX; n];
        let mut best: Option<(usize, usize)> = None;
        let mut pos = from;
        loop {
            if best.is_none() && pos <= text.len() {
                self.add(&mut clist, &mut mark, pos, 0, pos);
            }
            if clist.is_empty() {
                break;
            }
            let byte = text.get(pos).copied();
            for &(pc, start) in &clist {
                match &self.prog[pc] {
                    Inst::Match => {
                        best = Some((start, pos));
                        // Lower-priority threads can't win any more.
                        break;
                    }
                    Inst::Byte(b) if byte == Some(*b) => self.add(&mut nlist, &mut mark, pos + 1, pc + 1, start),
                    Inst::Class(set) if byte.is_some_and(|c| set[c as usize]) => {
                        self.add(&mut nlist, &mut mark, pos + 1, pc + 1, start)
                    }
                    Inst::Any if byte.is_some_and(|c| c != b'\n') => {
                        self.add(&mut nlist, &mut mark, pos + 1, pc + 1, start)
                    }
                    _ => {}
                }
            }
            if pos >= text.len() {
                break;
            }
            std::mem::swap(&mut clist, &mut nlist);
            nlist.clear();
            pos += 1;
        }
        best
    }

    fn add(&self, list: &mut Vec<(usize, usize)>, mark: &mut [usize], pos: usize, pc: usize, start: usize) {
        // `mark` holds the text position + 1 a pc was last added at.
        if mark[pc] == pos + 1 {
            return;
        }
        mark[pc] = pos + 1;
        match self.prog[pc] {
            Inst::Split(a, b) => {
                self.add(list, mark, pos, a, start);
                self.add(list, mark, pos, b, start);
            }
            Inst::Jmp(t) => self.add(list, mark, pos, t, start),
            _ => list.push((pc, start)),
        }
    }

    /// All leftmost, non-overlapping matches, in order.
    pub fn find_all<'t>(&self, text: &'t [u8]) -> Vec<&'t [u8]> {
        let mut out = Vec::new();
        let mut at = 0;
        while at <= text.len() {
            let Some((s, e)) = self.find_at(text, at) else { break };
            out.push(&text[s..e]);
            at = if e == s { e + 1 } else { e };
        }
        out
    }

    pub fn is_match(&self, text: &[u8]) -> bool {
        self.find_at(text, 0).is_some()
    }
}

fn escape_atom(c: u8, offset: usize) -> Result<Inst, PatternError> {
    Ok(match c {
        b'd' => Inst::Class(Box::new(set_from(|b| b.is_ascii_digit()))),
        b'w' => Inst::Class(Box::new(set_from(|b| b.is_ascii_alphanumeric() || b == b'_'))),
        b's' => Inst::Class(Box::new(set_from(|b| matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c)))),
        b'n' => Inst::Byte(b'\n'),
        b'r' => Inst::Byte(b'\r'),
        b't' => Inst::Byte(b'\t'),
        c if c.is_ascii_alphanumeric() => return perr(offset, format!("unsupported escape \\{}", c as char)),
        c => Inst::Byte(c),
    })
}

fn set_from(f: impl Fn(u8) -> bool) -> [bool; 256] {
    let mut set = [false; 256];
    for b in 0..=255u8 {
        set[b as usize] = f(b);
    }
    set
}

/// Parse `[...]` starting at `open`. A `-` is literal at either end of the
/// class or directly after a completed range.
fn parse_class(p: &[u8], open: usize) -> Result<(Box<[bool; 256]>, usize), PatternError> {
    let mut set = Box::new([false; 256]);
    let mut i = open + 1;
    let negate = p.get(i) == Some(&b'^');
    if negate {
        i += 1;
    }
    let mut first = true;
    let mut after_range = false;
    loop {
        let Some(&c) = p.get(i) else {
            return perr(open, "unterminated class");
        };
        if c == b']' && !first {
            i += 1;
            break;
        }
        // A `-` right after a range is a literal and can't open another.
        let dash_after_range = c == b'-' && after_range;
        let (lo, next) = class_char(p, i)?;
        i = next;
        let is_range = !dash_after_range && p.get(i) == Some(&b'-') && p.get(i + 1).is_some_and(|&n| n != b']');
        if is_range {
            let (hi, next) = class_char(p, i + 1)?;
            if hi < lo {
                return perr(i, "reversed class range");
            }
            for b in lo..=hi {
                set[b as usize] = true;
            }
            i = next;
            after_range = true;
        } else {
            set[lo as usize] = true;
            after_range = false;
        }
        first = false;
    }
    if negate {
        for b in set.iter_mut() {
            *b = !*b;
        }
    }
    Ok((set, i))
}

fn class_char(p: &[u8], i: usize) -> Result<(u8, usize), PatternError> {
    match p[i] {
        b'\\' => match p.get(i + 1) {
            Some(b'n') => Ok((b'\n', i + 2)),
            Some(b'r') => Ok((b'\r', i + 2)),
            Some(b't') => Ok((b'\t', i + 2)),
            Some(&c) if !c.is_ascii_alphanumeric() => Ok((c, i + 2)),
            Some(&c) => perr(i, format!("unsupported class escape \\{}", c as char)),
            None => perr(i, "trailing backslash"),
        },
        c => Ok((c, i + 1)),
    }
}

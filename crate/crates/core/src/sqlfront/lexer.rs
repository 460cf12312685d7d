//! Tokenizer for the supported SQL subset.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    /// Identifier or keyword, original spelling.
    Word(String),
    Int(i64),
    Float(f64),
    Str(String),
    Param(usize),
    LParen,
    RParen,
    Star,
    Comma,
    Dot,
    Semi,
    Op(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        offset,
        message: message.into(),
    }
}

/// Byte length of a numeric literal starting at `i` (optional leading '-').
pub(crate) fn number_len(b: &[u8], i: usize) -> usize {
    let mut j = i;
    if j < b.len() && b[j] == b'-' {
        j += 1;
    }
    let digits_start = j;
    while j < b.len() && b[j].is_ascii_digit() {
        j += 1;
    }
    if j == digits_start {
        return 0;
    }
    if j + 1 < b.len() && b[j] == b'.' && b[j + 1].is_ascii_digit() {
        j += 1;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
    }
    if j < b.len() && (b[j] == b'e' || b[j] == b'E') {
        let mut k = j + 1;
        if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
            k += 1;
        }
        if k < b.len() && b[k].is_ascii_digit() {
            while k < b.len() && b[k].is_ascii_digit() {
                k += 1;
            }
            j = k;
        }
    }
    j - i
}

pub fn tokenize(sql: &str) -> Result<Vec<Token>> {
    let b = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        let tok = match c {
            _ if c.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            b'-' if b.get(i + 1) == Some(&b'-') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'*' => {
                i += 1;
                Tok::Star
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            b'.' => {
                i += 1;
                Tok::Dot
            }
            b';' => {
                i += 1;
                Tok::Semi
            }
            b'=' => {
                i += 1;
                Tok::Op("=")
            }
            b'<' | b'>' => {
                let eq = b.get(i + 1) == Some(&b'=');
                i += if eq { 2 } else { 1 };
                Tok::Op(match (c, eq) {
                    (b'<', true) => "<=",
                    (b'<', false) => "<",
                    (_, true) => ">=",
                    _ => ">",
                })
            }
            b'\'' => {
                let mut s = Vec::new();
                i += 1;
                loop {
                    match b.get(i) {
                        None => return Err(syntax(start, "unterminated string literal")),
                        Some(b'\'') if b.get(i + 1) == Some(&b'\'') => {
                            s.push(b'\'');
                            i += 2;
                        }
                        Some(b'\'') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                Tok::Str(
                    String::from_utf8(s).map_err(|_| syntax(start, "invalid utf-8 in string"))?,
                )
            }
            b'$' => {
                i += 1;
                let d = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let n: usize = sql[d..i]
                    .parse()
                    .map_err(|_| syntax(start, "expected parameter number after '$'"))?;
                if n == 0 {
                    return Err(syntax(start, "parameters are numbered from $1"));
                }
                Tok::Param(n)
            }
            _ if c.is_ascii_digit() || c == b'-' => {
                let len = number_len(b, i);
                if len == 0 {
                    return Err(syntax(start, "unexpected character '-'"));
                }
                let text = &sql[i..i + len];
                i += len;
                if text.contains(['.', 'e', 'E']) {
                    Tok::Float(text.parse().map_err(|_| syntax(start, "bad number"))?)
                } else {
                    Tok::Int(
                        text.parse()
                            .map_err(|_| syntax(start, "integer out of range"))?,
                    )
                }
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                Tok::Word(sql[start..i].to_string())
            }
            _ => {
                let ch = sql[i..].chars().next().unwrap();
                return Err(syntax(start, format!("unexpected character '{ch}'")));
            }
        };
        out.push(Token { tok, offset: start });
    }
    Ok(out)
}

//! Lexical query templatization: literals and parameter slots are masked with
//! positional placeholders, words are case folded and whitespace collapsed.
//! Total over arbitrary input, so unsupported SQL still gets a fingerprint.

use serde::{Deserialize, Serialize};

use super::lexer::number_len;
use crate::catalog::fnv1a;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub fingerprint: u64,
    /// Normalized, literal-masked text the fingerprint is computed from.
    pub canonical: String,
    pub raw_example: String,
    pub parameter_count: usize,
}

impl QueryTemplate {
    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint)
    }
}

/// Canonical masked token stream and number of masked literals.
pub fn normalize(sql: &str) -> (String, usize) {
    let b = sql.as_bytes();
    let mut tokens: Vec<String> = Vec::new();
    let mut literals = 0;
    let mut mask = |tokens: &mut Vec<String>| {
        literals += 1;
        tokens.push(format!("?{literals}"));
    };
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'-' && b.get(i + 1) == Some(&b'-') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if c == b'\'' {
            i += 1;
            while i < b.len() {
                if b[i] == b'\'' {
                    if b.get(i + 1) == Some(&b'\'') {
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                i += 1;
            }
            mask(&mut tokens);
        } else if c == b'$' && b.get(i + 1).is_some_and(u8::is_ascii_digit) {
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            mask(&mut tokens);
        } else if c.is_ascii_digit()
            || (c == b'-'
                && b.get(i + 1).is_some_and(u8::is_ascii_digit)
                && !tokens.last().is_some_and(|t| is_operand_end(t)))
        {
            i += number_len(b, i).max(1);
            mask(&mut tokens);
        } else if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] >= 0x80) {
                i += 1;
            }
            tokens.push(sql[start..i].to_lowercase());
        } else if matches!(c, b'<' | b'>' | b'!') && b.get(i + 1) == Some(&b'=')
            || (c == b'<' && b.get(i + 1) == Some(&b'>'))
        {
            tokens.push(sql[i..i + 2].to_string());
            i += 2;
        } else {
            // any other single byte (or full UTF-8 char) is its own token
            let ch = sql[i..].chars().next().unwrap();
            tokens.push(ch.to_string());
            i += ch.len_utf8();
        }
    }
    (tokens.join(" "), literals)
}

/// A '-' after one of these is binary minus, not a sign.
fn is_operand_end(tok: &str) -> bool {
    tok == ")"
        || tok.starts_with('?')
        || tok
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
}

pub fn templatize(sql: &str) -> QueryTemplate {
    let (canonical, parameter_count) = normalize(sql);
    QueryTemplate {
        fingerprint: fnv1a(&[canonical.as_bytes()]),
        canonical,
        raw_example: sql.to_string(),
        parameter_count,
    }
}

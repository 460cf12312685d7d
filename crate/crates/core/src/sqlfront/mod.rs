//! SQL subset parsing, query files and lexical templatization.

mod lexer;
mod parser;
mod template;

pub use parser::{parse, Aggregate, ColumnName, Filter, LogicalQuery, Operand};
pub use template::{normalize, templatize, QueryTemplate};

use crate::error::{Error, Result};

/// One statement from a query file with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryLine {
    pub line: usize,
    pub sql: String,
    pub query: LogicalQuery,
}

/// Parses a query file: one statement per line, `--` comments and blank
/// lines ignored. Errors name the failing line.
pub fn parse_query_file(text: &str) -> Result<Vec<QueryLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let sql = raw.trim();
        if sql.is_empty() || sql.starts_with("--") {
            continue;
        }
        let query = parse(sql).map_err(|e| match e {
            Error::Syntax { offset, message } => Error::Syntax {
                offset,
                message: format!("line {}: {message}", i + 1),
            },
            other => other,
        })?;
        out.push(QueryLine {
            line: i + 1,
            sql: sql.to_string(),
            query,
        });
    }
    Ok(out)
}

/// Q1 over the movie schema: movies produced by company `$2`
/// that star actor `$1`.
pub const Q1_SQL: &str = "SELECT COUNT(*) FROM Actor \
JOIN Stars ON Actor.id = Stars.actor_id \
JOIN Movie ON Stars.movie_id = Movie.id \
JOIN Produces ON Movie.id = Produces.movie_id \
JOIN Company ON Produces.company_id = Company.id \
WHERE Actor.name = $1 AND Company.name = $2";

/// Q1 restricted to ratings in `($3, $4]`.
pub const Q2_SQL: &str = "SELECT COUNT(*) FROM Actor \
JOIN Stars ON Actor.id = Stars.actor_id \
JOIN Movie ON Stars.movie_id = Movie.id \
JOIN Produces ON Movie.id = Produces.movie_id \
JOIN Company ON Produces.company_id = Company.id \
WHERE Actor.name = $1 AND Company.name = $2 AND Movie.rating > $3 AND Movie.rating <= $4";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_file_skips_comments_and_reports_lines() {
        let text =
            "-- header\n\nSELECT COUNT(*) FROM Movie\n  SELECT COUNT(*) FROM Actor -- trailing\n";
        let qs = parse_query_file(text).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].line, 3);
        assert_eq!(qs[1].line, 4);
        let err = parse_query_file("SELECT COUNT(*) FROM Movie\nSELECT * FROM x\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn q2_has_rating_window() {
        let q = parse(Q2_SQL).unwrap();
        assert_eq!(q.filters.len(), 4);
        assert_eq!(q.parameter_count(), 4);
    }
}

//! Recursive-descent parser for
//! `SELECT COUNT(*) FROM t [, t | JOIN t ON a = b [AND c = d]]* [WHERE cond [AND cond]*]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, Tok, Token};
use crate::catalog::{Schema, Value};
use crate::error::{Error, Result};
use crate::query::{BoundQuery, CmpOp, ColumnRef, JoinEdge, Predicate};

/// A column as written: optionally qualified by its table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnName {
    pub table: Option<String>,
    pub column: String,
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => write!(f, "{}", self.column),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Literal(Value),
    /// `$n`, numbered from 1.
    Param(usize),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Literal(v) => write!(f, "{v}"),
            Operand::Param(n) => write!(f, "${n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: ColumnName,
    pub op: CmpOp,
    pub operand: Operand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    CountStar,
}

/// Parsed but unbound query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicalQuery {
    pub tables: Vec<String>,
    pub join_edges: Vec<(ColumnName, ColumnName)>,
    pub filters: Vec<Filter>,
    pub aggregate: Aggregate,
}

impl LogicalQuery {
    /// Highest parameter slot referenced, i.e. the number of parameters needed.
    pub fn parameter_count(&self) -> usize {
        self.filters
            .iter()
            .filter_map(|f| match f.operand {
                Operand::Param(n) => Some(n),
                Operand::Literal(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Resolves every column against `schema` and substitutes `params` (`$1` is
    /// `params[0]`).
    pub fn bind(&self, schema: &Schema, params: &[Value]) -> Result<BoundQuery> {
        for t in &self.tables {
            if schema.table(t).is_none() {
                return Err(Error::Schema(format!("unknown table {t}")));
            }
        }
        let resolve = |c: &ColumnName| -> Result<ColumnRef> {
            match &c.table {
                Some(t) => {
                    if !self.tables.contains(t) {
                        return Err(Error::Schema(format!("{c}: table {t} is not in FROM")));
                    }
                    Ok(ColumnRef::new(t, &c.column))
                }
                None => {
                    let owners: Vec<&String> = self
                        .tables
                        .iter()
                        .filter(|t| {
                            schema
                                .table(t)
                                .is_some_and(|d| d.column(&c.column).is_some())
                        })
                        .collect();
                    match owners.as_slice() {
                        [t] => Ok(ColumnRef::new(t, &c.column)),
                        [] => Err(Error::Schema(format!("unknown column {c}"))),
                        _ => Err(Error::Schema(format!("column {c} is ambiguous"))),
                    }
                }
            }
        };
        let joins = self
            .join_edges
            .iter()
            .map(|(l, r)| Ok(JoinEdge::new(resolve(l)?, resolve(r)?)))
            .collect::<Result<Vec<_>>>()?;
        let filters = self
            .filters
            .iter()
            .map(|f| {
                let value = match &f.operand {
                    Operand::Literal(v) => v.clone(),
                    Operand::Param(n) => params
                        .get(n - 1)
                        .cloned()
                        .ok_or_else(|| Error::Argument(format!("unbound parameter ${n}")))?,
                };
                Ok(Predicate {
                    column: resolve(&f.column)?,
                    op: f.op,
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BoundQuery::new(schema, self.tables.clone(), joins, filters)
    }
}

impl fmt::Display for LogicalQuery {
    /// Canonical form; parsing it yields an equal `LogicalQuery`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT COUNT(*) FROM {}", self.tables.join(", "))?;
        let conds: Vec<String> = self
            .join_edges
            .iter()
            .map(|(l, r)| format!("{l} = {r}"))
            .chain(
                self.filters
                    .iter()
                    .map(|x| format!("{} {} {}", x.column, x.op.symbol(), x.operand)),
            )
            .collect();
        if !conds.is_empty() {
            write!(f, " WHERE {}", conds.join(" AND "))?;
        }
        Ok(())
    }
}

const KEYWORDS: &[&str] = &[
    "SELECT", "COUNT", "FROM", "JOIN", "INNER", "ON", "WHERE", "AND",
];

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
    _src: &'a str,
}

enum Side {
    Col(ColumnName),
    Val(Operand),
}

impl<'a> Parser<'a> {
    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |t| t.offset)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        if self.peek_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {kw}"))
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Word(w)) if !KEYWORDS.iter().any(|k| w.eq_ignore_ascii_case(k)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.error("expected identifier"),
        }
    }

    fn column(&mut self) -> Result<ColumnName> {
        let first = self.ident()?;
        if self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
            let column = self.ident()?;
            Ok(ColumnName {
                table: Some(first),
                column,
            })
        } else {
            Ok(ColumnName {
                table: None,
                column: first,
            })
        }
    }

    fn side(&mut self) -> Result<Side> {
        let v = match self.peek() {
            Some(Tok::Int(v)) => Operand::Literal(Value::Int(*v)),
            Some(Tok::Float(v)) => Operand::Literal(Value::Float(*v)),
            Some(Tok::Str(s)) => Operand::Literal(Value::Str(s.clone())),
            Some(Tok::Param(n)) => Operand::Param(*n),
            _ => return Ok(Side::Col(self.column()?)),
        };
        self.pos += 1;
        Ok(Side::Val(v))
    }

    fn cmp_op(&mut self) -> Result<CmpOp> {
        let op = match self.peek() {
            Some(Tok::Op("=")) => CmpOp::Eq,
            Some(Tok::Op("<")) => CmpOp::Lt,
            Some(Tok::Op("<=")) => CmpOp::Le,
            Some(Tok::Op(">")) => CmpOp::Gt,
            Some(Tok::Op(">=")) => CmpOp::Ge,
            _ => return self.error("expected comparison operator"),
        };
        self.pos += 1;
        Ok(op)
    }

    fn condition(&mut self, q: &mut LogicalQuery, joins_only: bool) -> Result<()> {
        let start = self.offset();
        let lhs = self.side()?;
        let op = self.cmp_op()?;
        let rhs = self.side()?;
        let fail = |message: &str| {
            Err(Error::Syntax {
                offset: start,
                message: message.to_string(),
            })
        };
        match (lhs, rhs) {
            (Side::Col(l), Side::Col(r)) => {
                if op != CmpOp::Eq {
                    return fail("only equality joins are supported");
                }
                q.join_edges.push((l, r));
            }
            _ if joins_only => return fail("ON accepts only column = column"),
            (Side::Col(column), Side::Val(operand)) => q.filters.push(Filter {
                column,
                op,
                operand,
            }),
            (Side::Val(operand), Side::Col(column)) => q.filters.push(Filter {
                column,
                op: op.flip(),
                operand,
            }),
            (Side::Val(_), Side::Val(_)) => return fail("comparison needs a column"),
        }
        Ok(())
    }

    fn query(&mut self) -> Result<LogicalQuery> {
        self.keyword("SELECT")?;
        self.keyword("COUNT")?;
        self.expect(Tok::LParen, "'('")?;
        self.expect(Tok::Star, "'*' (only COUNT(*) is supported)")?;
        self.expect(Tok::RParen, "')'")?;
        self.keyword("FROM")?;
        let mut q = LogicalQuery {
            tables: vec![self.ident()?],
            join_edges: vec![],
            filters: vec![],
            aggregate: Aggregate::CountStar,
        };
        loop {
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                q.tables.push(self.ident()?);
            } else if self.peek_keyword("JOIN") || self.peek_keyword("INNER") {
                if self.peek_keyword("INNER") {
                    self.pos += 1;
                }
                self.keyword("JOIN")?;
                q.tables.push(self.ident()?);
                self.keyword("ON")?;
                self.condition(&mut q, true)?;
                while self.peek_keyword("AND") {
                    self.pos += 1;
                    self.condition(&mut q, true)?;
                }
            } else {
                break;
            }
        }
        if self.peek_keyword("WHERE") {
            self.pos += 1;
            self.condition(&mut q, false)?;
            while self.peek_keyword("AND") {
                self.pos += 1;
                self.condition(&mut q, false)?;
            }
        }
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
        if self.pos != self.tokens.len() {
            return self.error("unexpected trailing input");
        }
        Ok(q)
    }
}

/// Parses one statement of the supported subset.
pub fn parse(sql: &str) -> Result<LogicalQuery> {
    let mut p = Parser {
        tokens: tokenize(sql)?,
        pos: 0,
        len: sql.len(),
        _src: sql,
    };
    p.query()
}

//! Bound conjunctive COUNT(*) queries: the shared vocabulary of the parser,
//! optimizer, engine and oracles.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{DataType, Schema, Value};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    #[inline]
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// The operator with its operands swapped (`a < b` ⇔ `b > a`).
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: &str, column: &str) -> Self {
        ColumnRef {
            table: table.to_string(),
            column: column.to_string(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// `column <op> literal`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: CmpOp,
    pub value: Value,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.column, self.op.symbol(), self.value)
    }
}

/// Equi-join edge `left = right` between two different tables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl JoinEdge {
    pub fn new(left: ColumnRef, right: ColumnRef) -> Self {
        JoinEdge { left, right }
    }

    /// The column of this edge that lives in `table`, if any.
    pub fn side(&self, table: &str) -> Option<&ColumnRef> {
        if self.left.table == table {
            Some(&self.left)
        } else if self.right.table == table {
            Some(&self.right)
        } else {
            None
        }
    }
}

impl fmt::Display for JoinEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

/// A fully bound query: every column checked against a schema and every
/// parameter replaced by a literal. Tables keep their FROM order, which
/// defines the table bit positions used by the planner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub tables: Vec<String>,
    pub joins: Vec<JoinEdge>,
    pub filters: Vec<Predicate>,
}

/// Set of query tables as a bitmask over `BoundQuery::tables` positions.
pub type TableSet = u32;

/// Upper bound on tables per query; table sets are 32-bit masks.
pub const MAX_QUERY_TABLES: usize = 16;

impl BoundQuery {
    pub fn new(
        schema: &Schema,
        tables: Vec<String>,
        joins: Vec<JoinEdge>,
        filters: Vec<Predicate>,
    ) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Schema("query has no tables".into()));
        }
        if tables.len() > MAX_QUERY_TABLES {
            return Err(Error::Capacity(format!(
                "{} tables exceeds the {MAX_QUERY_TABLES}-table limit",
                tables.len()
            )));
        }
        for (i, t) in tables.iter().enumerate() {
            if schema.table(t).is_none() {
                return Err(Error::Schema(format!("unknown table {t}")));
            }
            if tables[..i].contains(t) {
                return Err(Error::Schema(format!("table {t} listed twice")));
            }
        }
        let column_type = |c: &ColumnRef| -> Result<DataType> {
            if !tables.contains(&c.table) {
                return Err(Error::Schema(format!("{c} references a table not in FROM")));
            }
            schema
                .table(&c.table)
                .and_then(|t| t.column(&c.column))
                .map(|c| c.dtype)
                .ok_or_else(|| Error::Schema(format!("unknown column {c}")))
        };
        for e in &joins {
            let (lt, rt) = (column_type(&e.left)?, column_type(&e.right)?);
            if e.left.table == e.right.table {
                return Err(Error::Schema(format!(
                    "join {e} compares a table with itself"
                )));
            }
            if lt != DataType::Int64 || rt != DataType::Int64 {
                return Err(Error::Schema(format!(
                    "join {e} must compare int64 columns"
                )));
            }
        }
        for p in &filters {
            let ct = column_type(&p.column)?;
            let ok = matches!(
                (ct, &p.value),
                (DataType::String, Value::Str(_))
                    | (
                        DataType::Int64 | DataType::Float64,
                        Value::Int(_) | Value::Float(_)
                    )
            );
            if !ok {
                return Err(Error::Schema(format!(
                    "filter {p} compares incompatible types"
                )));
            }
        }
        Ok(BoundQuery {
            tables,
            joins,
            filters,
        })
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn all_tables(&self) -> TableSet {
        ((1u64 << self.tables.len()) - 1) as TableSet
    }

    pub fn table_pos(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t == name)
    }

    pub fn filters_on<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.filters.iter().filter(move |p| p.column.table == table)
    }

    pub(crate) fn edge_sets(&self, e: &JoinEdge) -> (TableSet, TableSet) {
        let l = self.table_pos(&e.left.table).expect("bound edge");
        let r = self.table_pos(&e.right.table).expect("bound edge");
        (1 << l, 1 << r)
    }

    /// Edges with one endpoint in `a` and the other in `b`, in query order.
    pub fn edges_between(&self, a: TableSet, b: TableSet) -> Vec<&JoinEdge> {
        self.joins
            .iter()
            .filter(|e| {
                let (l, r) = self.edge_sets(e);
                (l & a != 0 && r & b != 0) || (l & b != 0 && r & a != 0)
            })
            .collect()
    }

    /// Edges with both endpoints inside `set`.
    pub fn edges_within(&self, set: TableSet) -> impl Iterator<Item = &JoinEdge> + '_ {
        self.joins.iter().filter(move |e| {
            let (l, r) = self.edge_sets(e);
            l & set != 0 && r & set != 0
        })
    }

    /// True when the join graph restricted to `set` is connected.
    pub fn is_connected(&self, set: TableSet) -> bool {
        if set == 0 {
            return false;
        }
        let mut reached = set & set.wrapping_neg();
        loop {
            let mut next = reached;
            for e in &self.joins {
                let (l, r) = self.edge_sets(e);
                if l & set != 0 && r & set != 0 && (l & reached != 0 || r & reached != 0) {
                    next |= l | r;
                }
            }
            if next == reached {
                return reached == set;
            }
            reached = next;
        }
    }

    /// Same tables and joins, different filters.
    pub fn with_filters(&self, filters: Vec<Predicate>) -> BoundQuery {
        BoundQuery {
            tables: self.tables.clone(),
            joins: self.joins.clone(),
            filters,
        }
    }
}

impl fmt::Display for BoundQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT COUNT(*) FROM {}", self.tables.join(", "))?;
        let conds: Vec<String> = self
            .joins
            .iter()
            .map(ToString::to_string)
            .chain(self.filters.iter().map(ToString::to_string))
            .collect();
        if !conds.is_empty() {
            write!(f, " WHERE {}", conds.join(" AND "))?;
        }
        Ok(())
    }
}

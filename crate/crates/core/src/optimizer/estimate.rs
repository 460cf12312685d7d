//! Cardinality estimation from ndv/min/max statistics under the usual
//! uniformity and independence assumptions.

use serde::{Deserialize, Serialize};

use crate::catalog::{Statistics, Value};
use crate::error::{Error, Result};
use crate::query::{BoundQuery, CmpOp, ColumnRef, Predicate, TableSet};

/// Selectivity assumed for range predicates on strings.
pub const STRING_RANGE_SELECTIVITY: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardEstimate {
    pub estimated_rows: f64,
}

/// Estimated row counts for every table subset of one query. Estimates depend
/// only on the subset, never on the join order that produced it.
#[derive(Clone, Debug)]
pub struct Estimator<'a> {
    query: &'a BoundQuery,
    stats: &'a Statistics,
    base_rows: Vec<f64>,
    leaf_rows: Vec<f64>,
    /// `(tables touched, selectivity)` per join edge.
    edges: Vec<(TableSet, f64)>,
}

impl<'a> Estimator<'a> {
    pub fn new(query: &'a BoundQuery, stats: &'a Statistics) -> Result<Self> {
        let mut base_rows = Vec::with_capacity(query.tables.len());
        let mut leaf_rows = Vec::with_capacity(query.tables.len());
        for t in &query.tables {
            let n = stats.table(t)?.row_count as f64;
            let mut sel = 1.0;
            for p in query.filters_on(t) {
                sel *= selectivity(stats, p)?;
            }
            base_rows.push(n);
            leaf_rows.push(n * sel);
        }
        let mut edges = Vec::with_capacity(query.joins.len());
        for e in &query.joins {
            let l = stats.column(&e.left.table, &e.left.column)?.ndv;
            let r = stats.column(&e.right.table, &e.right.column)?.ndv;
            let set = (1 << pos(query, &e.left)?) | (1 << pos(query, &e.right)?);
            edges.push((set, 1.0 / l.max(r).max(1) as f64));
        }
        Ok(Estimator {
            query,
            stats,
            base_rows,
            leaf_rows,
            edges,
        })
    }

    pub fn query(&self) -> &'a BoundQuery {
        self.query
    }

    pub fn stats(&self) -> &'a Statistics {
        self.stats
    }

    /// Rows stored in the table at query position `pos`.
    pub fn base_rows(&self, pos: usize) -> f64 {
        self.base_rows[pos]
    }

    /// Rows of the table at `pos` surviving its filters.
    pub fn leaf_rows(&self, pos: usize) -> f64 {
        self.leaf_rows[pos]
    }

    /// Estimated rows of joining every table in `set` with all applicable
    /// edges; tables with no edge between them are multiplied (cross join).
    pub fn rows(&self, set: TableSet) -> f64 {
        let mut rows = 1.0;
        let mut s = set;
        while s != 0 {
            rows *= self.leaf_rows[s.trailing_zeros() as usize];
            s &= s - 1;
        }
        for &(edge, sel) in &self.edges {
            if edge & set == edge {
                rows *= sel;
            }
        }
        rows
    }

    /// Expected rows an index probe on `table.column` fetches.
    pub fn index_fetch_rows(&self, table: &str, column: &str) -> Result<f64> {
        let c = self.stats.column(table, column)?;
        Ok(c.row_count as f64 / c.ndv.max(1) as f64)
    }
}

fn pos(query: &BoundQuery, c: &ColumnRef) -> Result<usize> {
    query
        .table_pos(&c.table)
        .ok_or_else(|| Error::Estimation(format!("{c} is not in the query")))
}

/// Fraction of rows satisfying `p`: `1/ndv` for equality, the covered share of
/// `[min, max]` for numeric ranges.
pub fn selectivity(stats: &Statistics, p: &Predicate) -> Result<f64> {
    let c = stats.column(&p.column.table, &p.column.column)?;
    if p.op == CmpOp::Eq {
        return Ok(1.0 / c.ndv.max(1) as f64);
    }
    let (Some(min), Some(max)) = (&c.min, &c.max) else {
        return Ok(1.0);
    };
    let (Some(lo), Some(hi), Some(v)) = (min.as_f64(), max.as_f64(), p.value.as_f64()) else {
        return Ok(match (&p.value, min) {
            (Value::Str(_), Value::Str(_)) => STRING_RANGE_SELECTIVITY,
            _ => 1.0,
        });
    };
    if hi <= lo {
        return Ok(if min.satisfies(p.op, &p.value) {
            1.0
        } else {
            0.0
        });
    }
    let frac = match p.op {
        CmpOp::Lt | CmpOp::Le => (v - lo) / (hi - lo),
        CmpOp::Gt | CmpOp::Ge => (hi - v) / (hi - lo),
        CmpOp::Eq => unreachable!(),
    };
    Ok(frac.clamp(0.0, 1.0))
}

/// Estimated rows of the sub-query over `set` (positions in `query.tables`).
pub fn estimate_cardinality(
    stats: &Statistics,
    query: &BoundQuery,
    set: TableSet,
) -> Result<CardEstimate> {
    if set == 0 || set & !query.all_tables() != 0 {
        return Err(Error::Argument(format!(
            "table set {set:#b} is not a subset of the query"
        )));
    }
    Ok(CardEstimate {
        estimated_rows: Estimator::new(query, stats)?.rows(set),
    })
}

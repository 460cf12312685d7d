//! Naive reference evaluation used as a test oracle.
//!
//! Deliberately shares nothing with the execution engine beyond the sampling
//! definition: rows are compared as decoded [`Value`]s and joins are evaluated
//! by nested-loop backtracking.

use super::{fnv1a, mix64, Database, Value};
use crate::error::Result;
use crate::query::BoundQuery;

/// Deterministic Bernoulli(`fraction`) row subset of a table, seeded per table.
pub fn sample_mask(table: &str, rows: usize, fraction: f64, seed: u64) -> Vec<bool> {
    if fraction >= 1.0 {
        return vec![true; rows];
    }
    let base = mix64(seed ^ fnv1a(&[b"sample", table.as_bytes()]));
    let threshold = (fraction.max(0.0) * (u64::MAX as f64)) as u64;
    (0..rows as u64)
        .map(|r| mix64(base ^ r.wrapping_mul(0x9e37_79b9_7f4a_7c15)) < threshold)
        .collect()
}

/// Exact row count of the conjunctive query by nested-loop evaluation.
pub fn true_cardinality(db: &Database, query: &BoundQuery) -> Result<u64> {
    count(db, query, None)
}

/// Exact count over the seeded Bernoulli sample of every base table.
pub fn true_cardinality_sampled(
    db: &Database,
    query: &BoundQuery,
    fraction: f64,
    seed: u64,
) -> Result<u64> {
    count(db, query, Some((fraction, seed)))
}

struct Level {
    /// Row ids of this table surviving its filters (and the sample).
    rows: Vec<usize>,
    /// (column of this table, earlier level, column of that table)
    checks: Vec<(usize, usize, usize)>,
}

fn count(db: &Database, query: &BoundQuery, sample: Option<(f64, u64)>) -> Result<u64> {
    // visit tables so that each one joins something already bound when possible
    let n = query.tables.len();
    let mut order: Vec<usize> = vec![0];
    while order.len() < n {
        let next = (0..n)
            .filter(|t| !order.contains(t))
            .find(|&t| {
                query.joins.iter().any(|e| {
                    let (l, r) = (
                        query.table_pos(&e.left.table),
                        query.table_pos(&e.right.table),
                    );
                    (l == Some(t) && order.iter().any(|o| r == Some(*o)))
                        || (r == Some(t) && order.iter().any(|o| l == Some(*o)))
                })
            })
            .or_else(|| (0..n).find(|t| !order.contains(t)))
            .unwrap();
        order.push(next);
    }

    let mut levels: Vec<Level> = Vec::with_capacity(n);
    for (depth, &ti) in order.iter().enumerate() {
        let name = &query.tables[ti];
        let table = db.table(name)?;
        let mask = sample.map(|(f, s)| super::sample_mask(name, table.row_count(), f, s));
        let filters: Vec<(usize, &crate::query::Predicate)> = query
            .filters_on(name)
            .map(|p| {
                Ok((
                    table.def.column_index(&p.column.column).ok_or_else(|| {
                        crate::error::Error::Schema(format!("unknown column {}", p.column))
                    })?,
                    p,
                ))
            })
            .collect::<Result<_>>()?;
        let rows = (0..table.row_count())
            .filter(|&r| mask.as_ref().is_none_or(|m| m[r]))
            .filter(|&r| {
                filters
                    .iter()
                    .all(|(ci, p)| table.column_at(*ci).value(r).satisfies(p.op, &p.value))
            })
            .collect();
        let mut checks = Vec::new();
        for e in &query.joins {
            for (mine, other) in [(&e.left, &e.right), (&e.right, &e.left)] {
                if mine.table != *name {
                    continue;
                }
                if let Some(level) = order[..depth]
                    .iter()
                    .position(|&o| query.tables[o] == other.table)
                {
                    let my_col = table.def.column_index(&mine.column).ok_or_else(|| {
                        crate::error::Error::Schema(format!("unknown column {mine}"))
                    })?;
                    let other_table = db.table(&other.table)?;
                    let other_col =
                        other_table.def.column_index(&other.column).ok_or_else(|| {
                            crate::error::Error::Schema(format!("unknown column {other}"))
                        })?;
                    checks.push((my_col, level, other_col));
                }
            }
        }
        levels.push(Level { rows, checks });
    }

    let tables: Vec<_> = order
        .iter()
        .map(|&ti| db.table(&query.tables[ti]))
        .collect::<Result<_>>()?;
    let mut bound: Vec<usize> = Vec::with_capacity(n);
    Ok(descend(&tables, &levels, &mut bound))
}

fn descend(tables: &[&super::Table], levels: &[Level], bound: &mut Vec<usize>) -> u64 {
    let depth = bound.len();
    if depth == levels.len() {
        return 1;
    }
    let level = &levels[depth];
    let mut total = 0;
    for &r in &level.rows {
        let ok = level
            .checks
            .iter()
            .all(|&(my_col, other_level, other_col)| {
                let mine: Value = tables[depth].column_at(my_col).value(r);
                let theirs: Value = tables[other_level]
                    .column_at(other_col)
                    .value(bound[other_level]);
                mine == theirs
            });
        if ok {
            bound.push(r);
            total += descend(tables, levels, bound);
            bound.pop();
        }
    }
    total
}

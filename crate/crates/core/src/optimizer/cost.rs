//! C_out-style cost model over estimated cardinalities.
//!
//! * scan: stored rows + output rows
//! * index lookup: `row_count / ndv(column)` fetched + output rows
//! * join: output rows + both children + an operator charge:
//!   hash builds on the smaller estimated input (`min(L, R)`), sort-merge pays
//!   `s(L) + s(R)` with `s(n) = n·⌈log2 n⌉`, nested loop pays `L·R`.

use super::estimate::Estimator;
use crate::engine::{AccessPath, JoinAlgorithm, PlanNode};
use crate::error::{Error, Result};

pub fn sort_cost(n: f64) -> f64 {
    if n <= 1.0 {
        0.0
    } else {
        n * n.log2().ceil()
    }
}

pub fn join_charge(algorithm: JoinAlgorithm, left_rows: f64, right_rows: f64) -> f64 {
    match algorithm {
        JoinAlgorithm::Hash => left_rows.min(right_rows),
        JoinAlgorithm::SortMerge => sort_cost(left_rows) + sort_cost(right_rows),
        JoinAlgorithm::NestedLoop => left_rows * right_rows,
    }
}

/// Total cost of a join node. Written so mirrored joins (`L⋈R`, `R⋈L`) cost
/// exactly the same in floating point.
pub fn join_cost(
    algorithm: JoinAlgorithm,
    out_rows: f64,
    left: (f64, f64),
    right: (f64, f64),
) -> f64 {
    (left.0 + right.0) + (out_rows + join_charge(algorithm, left.1, right.1))
}

pub fn access_cost(est: &Estimator, pos: usize, path: &AccessPath) -> Result<f64> {
    let out = est.leaf_rows(pos);
    let input = match path {
        AccessPath::FullScan => est.base_rows(pos),
        AccessPath::IndexLookup { column } => {
            est.index_fetch_rows(&est.query().tables[pos], column)?
        }
    };
    Ok(input + out)
}

/// Estimated `(cost, rows)` of an arbitrary plan tree for the estimator's query.
pub fn cost_plan(est: &Estimator, node: &PlanNode) -> Result<(f64, f64)> {
    Ok(walk(est, node)?.0)
}

fn walk(est: &Estimator, node: &PlanNode) -> Result<((f64, f64), u32)> {
    match node {
        PlanNode::Access { table, path, .. } => {
            let pos = est
                .query()
                .table_pos(table)
                .ok_or_else(|| Error::Plan(format!("table {table} is not in the query")))?;
            Ok(((access_cost(est, pos, path)?, est.leaf_rows(pos)), 1 << pos))
        }
        PlanNode::Join {
            algorithm,
            left,
            right,
            ..
        } => {
            let ((lc, lr), ls) = walk(est, left)?;
            let ((rc, rr), rs) = walk(est, right)?;
            let set = ls | rs;
            let out = est.rows(set);
            Ok(((join_cost(*algorithm, out, (lc, lr), (rc, rr)), out), set))
        }
    }
}

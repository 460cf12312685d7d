//! The traditional optimizer: estimation, costing, dynamic programming with a
//! deliberately narrow default search space, top-k ranking, and an exhaustive
//! enumerator used as a test oracle.

mod cost;
pub(crate) mod dp;
mod enumerate;
mod estimate;

pub use cost::{access_cost, cost_plan, join_charge, join_cost, sort_cost};
pub use enumerate::{
    enumerate_all, plan_space_size, EnumerateConfig, MAX_ENUMERATED_PLANS, MAX_ENUMERATION_TABLES,
};
pub use estimate::{
    estimate_cardinality, selectivity, CardEstimate, Estimator, STRING_RANGE_SELECTIVITY,
};

use serde::{Deserialize, Serialize};

use crate::catalog::Statistics;
use crate::engine::{AccessPath, QueryPlan};
use crate::error::{Error, Result};
use crate::query::{BoundQuery, CmpOp, TableSet};

/// Search-space switches. The default (left-deep, no cross joins) is the
/// classic restricted space.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub allow_cross_joins: bool,
    pub bushy: bool,
}

impl OptimizerConfig {
    /// Bushy trees and cross joins: the whole plan space.
    pub fn exhaustive() -> Self {
        OptimizerConfig {
            allow_cross_joins: true,
            bushy: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostedPlan {
    pub plan: QueryPlan,
    pub estimated_cost: f64,
    pub estimated_rows: f64,
}

/// The cheapest plan by estimated cost; ties go to the lexicographically
/// smallest canonical form.
pub fn optimize(
    query: &BoundQuery,
    stats: &Statistics,
    config: OptimizerConfig,
) -> Result<CostedPlan> {
    Ok(top_k_plans(query, stats, 1, config)?.remove(0))
}

/// Up to `k` distinct plans in ascending `(estimated cost, canonical form)`
/// order; the first is [`optimize`]'s choice.
pub fn top_k_plans(
    query: &BoundQuery,
    stats: &Statistics,
    k: usize,
    config: OptimizerConfig,
) -> Result<Vec<CostedPlan>> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let est = Estimator::new(query, stats)?;
    let rows = est.rows(query.all_tables());
    Ok(dp::k_best(&est, k, config)?
        .into_iter()
        .map(|e| CostedPlan {
            plan: QueryPlan::from_root(e.node),
            estimated_cost: e.cost,
            estimated_rows: rows,
        })
        .collect())
}

/// Like [`top_k_plans`], but skipping plans physically equivalent to a
/// better-ranked one (see [`PlanNode::physical_key`]).
///
/// [`PlanNode::physical_key`]: crate::engine::PlanNode::physical_key
pub fn top_k_distinct_plans(
    query: &BoundQuery,
    stats: &Statistics,
    k: usize,
    config: OptimizerConfig,
) -> Result<Vec<CostedPlan>> {
    let mut request = k.saturating_mul(2);
    loop {
        let ranked = top_k_plans(query, stats, request, config)?;
        let exhausted = ranked.len() < request;
        let mut seen = std::collections::HashSet::new();
        let distinct: Vec<CostedPlan> = ranked
            .into_iter()
            .filter(|c| seen.insert(c.plan.root.physical_key()))
            .take(k)
            .collect();
        if distinct.len() == k || exhausted {
            return Ok(distinct);
        }
        request = request.saturating_mul(2);
    }
}

/// Access paths for `table`: a full scan, plus an index lookup for every
/// indexed column carrying an equality filter.
pub fn access_paths(
    query: &BoundQuery,
    table: &str,
    has_index: impl Fn(&str) -> bool,
) -> Vec<AccessPath> {
    let mut cols: Vec<&str> = query
        .filters_on(table)
        .filter(|f| f.op == CmpOp::Eq && has_index(&f.column.column))
        .map(|f| f.column.column.as_str())
        .collect();
    cols.sort_unstable();
    cols.dedup();
    std::iter::once(AccessPath::FullScan)
        .chain(cols.into_iter().map(|c| AccessPath::IndexLookup {
            column: c.to_string(),
        }))
        .collect()
}

/// Per table position, the set of tables it shares a join edge with.
pub(crate) fn adjacency(query: &BoundQuery) -> Vec<TableSet> {
    let mut adj = vec![0; query.tables.len()];
    for e in &query.joins {
        let (Some(l), Some(r)) = (
            query.table_pos(&e.left.table),
            query.table_pos(&e.right.table),
        ) else {
            continue;
        };
        adj[l] |= 1 << r;
        adj[r] |= 1 << l;
    }
    adj
}

/// Whether some join edge crosses between `a` and `b`.
pub(crate) fn connects(adjacency: &[TableSet], a: TableSet, b: TableSet) -> bool {
    let mut s = b;
    while s != 0 {
        if adjacency[s.trailing_zeros() as usize] & a != 0 {
            return true;
        }
        s &= s - 1;
    }
    false
}

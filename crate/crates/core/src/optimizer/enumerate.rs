//! Exhaustive plan enumeration: every bushy tree, cross joins included, with
//! every join algorithm and access path. Only feasible for small queries; it
//! exists as a ground-truth oracle.

use super::{access_paths, adjacency, connects};
use crate::catalog::Schema;
use crate::engine::{JoinAlgorithm, PlanNode, QueryPlan};
use crate::error::{Error, Result};
use crate::query::{BoundQuery, TableSet};

/// Hard ceiling on `EnumerateConfig::max_tables`.
pub const MAX_ENUMERATION_TABLES: usize = 7;

/// Plans are materialized in memory, so very large spaces are refused even
/// under the table limit.
pub const MAX_ENUMERATED_PLANS: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerateConfig {
    pub max_tables: usize,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        EnumerateConfig { max_tables: 5 }
    }
}

fn join_choices(crossing: bool) -> u128 {
    if crossing {
        JoinAlgorithm::ALL.len() as u128
    } else {
        1
    }
}

/// Number of plans [`enumerate_all`] would produce.
pub fn plan_space_size(query: &BoundQuery, schema: &Schema) -> u128 {
    let n = query.tables.len();
    let adj = adjacency(query);
    let mut count = vec![0u128; 1usize << n];
    for s in 1..=query.all_tables() {
        count[s as usize] = if s.count_ones() == 1 {
            let t = &query.tables[s.trailing_zeros() as usize];
            access_paths(query, t, |c| {
                schema.table(t).is_some_and(|d| d.has_index(c))
            })
            .len() as u128
        } else {
            let mut total: u128 = 0;
            let mut l = (s - 1) & s;
            while l != 0 {
                let r = s ^ l;
                total = total.saturating_add(
                    count[l as usize]
                        .saturating_mul(count[r as usize])
                        .saturating_mul(join_choices(connects(&adj, l, r))),
                );
                l = (l - 1) & s;
            }
            total
        };
    }
    count[query.all_tables() as usize]
}

/// Every valid plan of `query`, each exactly once. Ids are canonical-form
/// hashes (see [`QueryPlan::from_root`]).
pub fn enumerate_all(
    query: &BoundQuery,
    schema: &Schema,
    config: EnumerateConfig,
) -> Result<Vec<QueryPlan>> {
    if config.max_tables > MAX_ENUMERATION_TABLES {
        return Err(Error::config(
            "max_tables",
            format!(
                "{} exceeds the ceiling of {MAX_ENUMERATION_TABLES}",
                config.max_tables
            ),
        ));
    }
    let size = plan_space_size(query, schema);
    if query.tables.len() > config.max_tables || size > MAX_ENUMERATED_PLANS {
        return Err(Error::TooManyPlans {
            tables: query.tables.len(),
            plans: size,
        });
    }
    let adj = adjacency(query);
    let mut memo: Vec<Vec<PlanNode>> = vec![Vec::new(); 1usize << query.tables.len()];
    for s in 1..=query.all_tables() {
        let mut plans = Vec::new();
        if s.count_ones() == 1 {
            let t = &query.tables[s.trailing_zeros() as usize];
            for path in access_paths(query, t, |c| {
                schema.table(t).is_some_and(|d| d.has_index(c))
            }) {
                plans.push(PlanNode::access(query, t, path));
            }
        } else {
            let mut l: TableSet = (s - 1) & s;
            while l != 0 {
                let r = s ^ l;
                let crossing = connects(&adj, l, r);
                for algorithm in JoinAlgorithm::ALL {
                    if algorithm.needs_condition() && !crossing {
                        continue;
                    }
                    for left in &memo[l as usize] {
                        for right in &memo[r as usize] {
                            plans.push(PlanNode::join(
                                query,
                                algorithm,
                                left.clone(),
                                right.clone(),
                            ));
                        }
                    }
                }
                l = (l - 1) & s;
            }
        }
        memo[s as usize] = plans;
    }
    Ok(std::mem::take(&mut memo[query.all_tables() as usize])
        .into_iter()
        .map(QueryPlan::from_root)
        .collect())
}

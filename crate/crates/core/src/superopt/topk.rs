//! Execute the optimizer's k best-ranked plans and keep the fastest.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{challenger_limit, cost_of, run_censored, ExecutedPlan};
use crate::catalog::{Database, Statistics};
use crate::engine::{execute, execute_with, measured_cost, CostSource, ExecOptions, QueryPlan};
use crate::error::{Error, Result};
use crate::optimizer::{top_k_distinct_plans, OptimizerConfig};
use crate::par::Parallelism;
use crate::query::BoundQuery;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopkOutcome {
    pub plan: QueryPlan,
    pub measured_cost: f64,
    /// Rank of the winner, 1-based.
    pub rank: usize,
    pub baseline: QueryPlan,
    pub baseline_cost: f64,
    pub executed: Vec<ExecutedPlan>,
}

/// Runs the rank-1 plan to completion, then every other ranked plan with the
/// rank-1 plan's work as a cut-off. Plans physically equivalent to a
/// better-ranked one are skipped, so `k` counts distinct executions. Returns the cheapest completed plan, the
/// earliest rank on ties.
pub fn superoptimize_topk(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    k: usize,
    config: OptimizerConfig,
    source: CostSource,
    mode: Parallelism,
) -> Result<TopkOutcome> {
    let ranked = top_k_distinct_plans(query, stats, k, config)?;
    let plans: Vec<QueryPlan> = ranked.into_iter().map(|c| c.plan).collect();
    let first = execute(db, &plans[0])?;
    let base_cost = measured_cost(&first, source);
    let opts = ExecOptions::with_limit(Some(challenger_limit(&first, source)));
    let rest = run_censored(db, &plans[1..], &opts, mode)?;

    let mut executed = vec![ExecutedPlan::new(
        "rank 1",
        &plans[0],
        Some(base_cost),
        false,
    )];
    let (mut best, mut best_cost) = (0, base_cost);
    for (i, r) in rest.iter().enumerate() {
        let c = cost_of(r, source);
        executed.push(ExecutedPlan::new(
            format!("rank {}", i + 2),
            &plans[i + 1],
            c,
            false,
        ));
        if let Some(c) = c {
            if c < best_cost {
                best = i + 1;
                best_cost = c;
            }
        }
    }
    Ok(TopkOutcome {
        plan: plans[best].clone(),
        measured_cost: best_cost,
        rank: best + 1,
        baseline: plans[0].clone(),
        baseline_cost: base_cost,
        executed,
    })
}

/// Executes ranked plans one at a time, best-ranked first, until `budget`
/// wall-clock time is spent or `max_k` plans have run. The rank-1 plan always
/// runs.
pub fn superoptimize_topk_budget(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    budget: Duration,
    max_k: usize,
    config: OptimizerConfig,
    source: CostSource,
) -> Result<TopkOutcome> {
    let start = Instant::now();
    let plans: Vec<QueryPlan> = top_k_distinct_plans(query, stats, max_k, config)?
        .into_iter()
        .map(|c| c.plan)
        .collect();
    let first = execute(db, &plans[0])?;
    let base_cost = measured_cost(&first, source);
    let opts = ExecOptions::with_limit(Some(challenger_limit(&first, source)));
    let mut executed = vec![ExecutedPlan::new(
        "rank 1",
        &plans[0],
        Some(base_cost),
        false,
    )];
    let (mut best, mut best_cost) = (0, base_cost);
    for (i, p) in plans.iter().enumerate().skip(1) {
        if start.elapsed() >= budget {
            break;
        }
        let c = match execute_with(db, p, &opts) {
            Ok(r) => Some(measured_cost(&r, source)),
            Err(Error::WorkLimitExceeded { .. }) => None,
            Err(e) => return Err(e),
        };
        executed.push(ExecutedPlan::new(format!("rank {}", i + 1), p, c, false));
        if let Some(c) = c {
            if c < best_cost {
                best = i;
                best_cost = c;
            }
        }
    }
    Ok(TopkOutcome {
        plan: plans[best].clone(),
        measured_cost: best_cost,
        rank: best + 1,
        baseline: plans[0].clone(),
        baseline_cost: base_cost,
        executed,
    })
}

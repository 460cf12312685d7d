//! Physical plans and the executor.

mod exec;
mod plan;

pub use exec::{
    execute, execute_on_sample, execute_with, measured_cost, CostSource, ExecOptions,
    ExecutionResult, SampleSpec, MAX_INTERMEDIATE_ROWS,
};
pub use plan::{AccessPath, JoinAlgorithm, PlanNode, QueryPlan};

use crate::catalog::Database;
use crate::error::Result;
use crate::par::{self, Parallelism};

/// Executes independent plans, in parallel when `mode` allows. Results are in
/// input order.
pub fn execute_batch(
    db: &Database,
    plans: &[QueryPlan],
    opts: &ExecOptions,
    mode: Parallelism,
) -> Vec<Result<ExecutionResult>> {
    par::map(mode, plans, |p| execute_with(db, p, opts))
}

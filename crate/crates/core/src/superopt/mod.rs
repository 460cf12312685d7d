//! Execution-driven plan search: the top-k wrapper, episodic exploration with
//! a learned value model, and Bayesian optimization in a learned latent space.

pub mod explore;
pub mod features;
pub mod gp;
pub mod latent;
pub mod net;
pub mod store;
pub mod topk;

pub use explore::{
    construction_states, gather_experience, max_min_select, run_episode, select_diverse,
    superoptimize_explore, ExploreConfig, ExploreOutcome, NetValueModel, PartialPlan, ValueModel,
};
pub use features::{featurize, featurize_forest, FeatureConfig};
pub use latent::{
    bayes_superoptimize, build_pool, superoptimize_latent, superoptimize_latent_with_net,
    BayesConfig, BayesOutcome, BayesStatus, LatentConfig, LatentOutcome, PlanPool, TraceRow,
};
pub use net::{BottleneckNet, NetConfig};
pub use store::{query_fingerprint, Experience, ExperienceStore};
pub use topk::{superoptimize_topk, superoptimize_topk_budget, TopkOutcome};

use serde::{Deserialize, Serialize};

use crate::catalog::Database;
use crate::engine::{
    execute_batch, measured_cost, CostSource, ExecOptions, ExecutionResult, QueryPlan,
};
use crate::error::{Error, Result};
use crate::par::Parallelism;

/// One plan execution performed during a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutedPlan {
    /// Which step of the search ran it, e.g. `baseline` or `round 2 sample`.
    pub stage: String,
    pub plan_id: u64,
    pub canonical: String,
    /// `None` when the run was cut off for exceeding the incumbent's work.
    pub measured: Option<f64>,
    pub sampled: bool,
}

impl ExecutedPlan {
    fn new(
        stage: impl Into<String>,
        plan: &QueryPlan,
        measured: Option<f64>,
        sampled: bool,
    ) -> Self {
        ExecutedPlan {
            stage: stage.into(),
            plan_id: plan.plan_id,
            canonical: plan.canonical(),
            measured,
            sampled,
        }
    }
}

/// Work budget for a challenger against an incumbent: under tuple costs a plan
/// doing more work cannot win; under wall-clock costs the budget is doubled.
pub(crate) fn challenger_limit(incumbent: &ExecutionResult, source: CostSource) -> u64 {
    match source {
        CostSource::Tuples => incumbent.tuples_processed,
        CostSource::Wall => incumbent.tuples_processed.saturating_mul(2),
    }
}

/// Executes plans under `opts`; a run cut off by the work limit yields `None`.
pub(crate) fn run_censored(
    db: &Database,
    plans: &[QueryPlan],
    opts: &ExecOptions,
    mode: Parallelism,
) -> Result<Vec<Option<ExecutionResult>>> {
    execute_batch(db, plans, opts, mode)
        .into_iter()
        .map(|r| match r {
            Ok(r) => Ok(Some(r)),
            Err(Error::WorkLimitExceeded { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

pub(crate) fn cost_of(r: &Option<ExecutionResult>, source: CostSource) -> Option<f64> {
    r.as_ref().map(|r| measured_cost(r, source))
}

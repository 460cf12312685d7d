//! Episodic plan construction guided by a learned value model, diverse
//! candidate selection, and execution-based verification.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, featurize_forest, FeatureConfig};
use super::net::{BottleneckNet, NetConfig};
use super::store::{query_fingerprint, Experience, ExperienceStore};
use super::{challenger_limit, cost_of, run_censored, ExecutedPlan};
use crate::catalog::{mix64, Database, Statistics};
use crate::engine::{
    execute, execute_with, measured_cost, AccessPath, CostSource, ExecOptions, JoinAlgorithm,
    PlanNode, QueryPlan, SampleSpec,
};
use crate::error::{Error, Result};
use crate::optimizer::{access_paths, optimize, Estimator, OptimizerConfig};
use crate::par::{self, Parallelism};
use crate::query::{BoundQuery, TableSet};

/// A forest of subtrees covering every query table. Leaves outside `decided`
/// have not had their access path chosen yet.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialPlan {
    pub trees: Vec<PlanNode>,
    pub decided: TableSet,
}

impl PartialPlan {
    /// One undecided leaf per table.
    pub fn initial(query: &BoundQuery) -> Self {
        PartialPlan {
            trees: query
                .tables
                .iter()
                .map(|t| PlanNode::access(query, t, AccessPath::FullScan))
                .collect(),
            decided: 0,
        }
    }

    pub fn is_complete(&self, query: &BoundQuery) -> bool {
        self.trees.len() == 1 && self.decided == query.all_tables()
    }

    pub fn features(&self, est: &Estimator, cfg: FeatureConfig) -> Result<Vec<f64>> {
        featurize_forest(&self.trees, est, cfg, self.decided)
    }
}

/// Scores construction states; lower is better.
pub trait ValueModel: Sync {
    /// Predicted cost, on any monotone scale, of the best complete plan
    /// reachable from `state`.
    fn predict_state(&self, state: &PartialPlan, est: &Estimator) -> Result<f64>;
}

/// The bottleneck network as a value model. Without a network every state
/// scores zero, so greedy steps fall back to action order.
#[derive(Clone, Debug)]
pub struct NetValueModel {
    pub net: Option<BottleneckNet>,
    pub features: FeatureConfig,
}

impl NetValueModel {
    pub fn untrained(features: FeatureConfig) -> Self {
        NetValueModel {
            net: None,
            features,
        }
    }

    pub fn train(
        samples: &[(Vec<f64>, f64)],
        features: FeatureConfig,
        config: NetConfig,
    ) -> Result<Self> {
        Ok(NetValueModel {
            net: Some(BottleneckNet::train(samples, config)?),
            features,
        })
    }

    /// Predicted `ln(1 + cost)` of a feature vector (0 when untrained).
    pub fn predict_features(&self, f: &[f64]) -> Result<f64> {
        match &self.net {
            Some(n) => n.predict(f),
            None => Ok(0.0),
        }
    }
}

impl ValueModel for NetValueModel {
    fn predict_state(&self, state: &PartialPlan, est: &Estimator) -> Result<f64> {
        match &self.net {
            Some(n) => n.predict(&state.features(est, self.features)?),
            None => Ok(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Action {
    Access {
        path: AccessPath,
    },
    Merge {
        left: usize,
        right: usize,
        algorithm: JoinAlgorithm,
        left_path: Option<AccessPath>,
        right_path: Option<AccessPath>,
    },
}

fn leaf_table(node: &PlanNode) -> Option<&str> {
    match node {
        PlanNode::Access { table, .. } => Some(table),
        PlanNode::Join { .. } => None,
    }
}

/// Path options for tree `i`: `[None]` when already fixed, else every path.
fn path_options(state: &PartialPlan, i: usize, est: &Estimator) -> Vec<Option<AccessPath>> {
    let q = est.query();
    match leaf_table(&state.trees[i]) {
        Some(t) if state.decided & (1 << q.table_pos(t).expect("query table")) == 0 => {
            access_paths(q, t, |c| est.stats().has_index(t, c))
                .into_iter()
                .map(Some)
                .collect()
        }
        _ => vec![None],
    }
}

fn actions(state: &PartialPlan, est: &Estimator) -> Vec<Action> {
    let q = est.query();
    let mut out = Vec::new();
    if state.trees.len() == 1 {
        if state.decided != q.all_tables() {
            for p in path_options(state, 0, est).into_iter().flatten() {
                out.push(Action::Access { path: p });
            }
        }
        return out;
    }
    let sets: Vec<TableSet> = state.trees.iter().map(|t| t.table_set(q)).collect();
    for left in 0..state.trees.len() {
        for right in 0..state.trees.len() {
            if left == right {
                continue;
            }
            let crossing = !q.edges_between(sets[left], sets[right]).is_empty();
            for algorithm in JoinAlgorithm::ALL {
                if algorithm.needs_condition() && !crossing {
                    continue;
                }
                for lp in path_options(state, left, est) {
                    for rp in path_options(state, right, est) {
                        out.push(Action::Merge {
                            left,
                            right,
                            algorithm,
                            left_path: lp.clone(),
                            right_path: rp,
                        });
                    }
                }
            }
        }
    }
    out
}

fn with_path(node: &PlanNode, path: Option<&AccessPath>) -> PlanNode {
    match (node, path) {
        (PlanNode::Access { table, filters, .. }, Some(p)) => PlanNode::Access {
            table: table.clone(),
            path: p.clone(),
            filters: filters.clone(),
        },
        _ => node.clone(),
    }
}

fn apply(state: &PartialPlan, action: &Action, q: &BoundQuery) -> PartialPlan {
    match action {
        Action::Access { path } => PartialPlan {
            trees: vec![with_path(&state.trees[0], Some(path))],
            decided: q.all_tables(),
        },
        Action::Merge {
            left,
            right,
            algorithm,
            left_path,
            right_path,
        } => {
            let l = with_path(&state.trees[*left], left_path.as_ref());
            let r = with_path(&state.trees[*right], right_path.as_ref());
            let decided = state.decided | l.table_set(q) | r.table_set(q);
            let joined = PlanNode::join(q, *algorithm, l, r);
            let mut trees: Vec<PlanNode> = state
                .trees
                .iter()
                .enumerate()
                .filter(|(i, _)| i != left && i != right)
                .map(|(_, t)| t.clone())
                .collect();
            trees.push(joined);
            PartialPlan { trees, decided }
        }
    }
}

/// Builds one complete plan bottom-up. Each step takes a uniformly random
/// valid action with probability `epsilon`, otherwise the action whose
/// resulting state the model scores lowest (first such action on ties).
/// Bushy trees and cross joins are all reachable.
pub fn run_episode(
    est: &Estimator,
    model: &dyn ValueModel,
    epsilon: f64,
    seed: u64,
) -> Result<QueryPlan> {
    let q = est.query();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = PartialPlan::initial(q);
    while !state.is_complete(q) {
        let acts = actions(&state, est);
        if acts.is_empty() {
            return Err(Error::Planning(
                "episode reached a state with no valid action".into(),
            ));
        }
        let explore = epsilon > 0.0 && rng.random::<f64>() < epsilon;
        let next = if explore {
            apply(&state, &acts[rng.random_range(0..acts.len())], q)
        } else {
            let mut best: Option<(f64, PartialPlan)> = None;
            for a in &acts {
                let s = apply(&state, a, q);
                let v = model.predict_state(&s, est)?;
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, s));
                }
            }
            best.expect("non-empty").1
        };
        state = next;
    }
    Ok(QueryPlan::from_root(state.trees.pop().expect("complete")))
}

/// Greedy max-min selection over feature vectors. The first pick is the
/// lowest `predicted`; each further pick maximizes its minimum Euclidean
/// distance to those already picked. Ties go to the lowest id. Returns indices
/// in pick order.
pub fn max_min_select(points: &[Vec<f64>], predicted: &[f64], ids: &[u64], k: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let first = (0..n)
        .min_by(|&a, &b| {
            predicted[a]
                .total_cmp(&predicted[b])
                .then(ids[a].cmp(&ids[b]))
        })
        .expect("non-empty");
    let mut picked = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(&points[i], &points[first])).collect();
    while picked.len() < k.min(n) {
        let next = (0..n)
            .filter(|i| !picked.contains(i))
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(ids[b].cmp(&ids[a])))
            .expect("candidates remain");
        picked.push(next);
        for i in 0..n {
            nearest[i] = nearest[i].min(dist(&points[i], &points[next]));
        }
    }
    picked
}

/// Picks `k` diverse plans from `candidates` after removing duplicates (by
/// canonical form). See [`max_min_select`].
pub fn select_diverse(
    candidates: &[QueryPlan],
    k: usize,
    model: &NetValueModel,
    est: &Estimator,
) -> Result<Vec<QueryPlan>> {
    let mut seen = HashSet::new();
    let distinct: Vec<&QueryPlan> = candidates
        .iter()
        .filter(|p| seen.insert(p.canonical()))
        .collect();
    let points = distinct
        .iter()
        .map(|p| featurize(&p.root, est, model.features))
        .collect::<Result<Vec<_>>>()?;
    let predicted = points
        .iter()
        .map(|f| model.predict_features(f))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<u64> = distinct.iter().map(|p| p.plan_id).collect();
    Ok(max_min_select(&points, &predicted, &ids, k)
        .into_iter()
        .map(|i| distinct[i].clone())
        .collect())
}

/// States after each join of `root` in post-order.
pub fn construction_states(root: &PlanNode, q: &BoundQuery) -> Vec<PartialPlan> {
    fn visit(node: &PlanNode, q: &BoundQuery, state: &mut PartialPlan, out: &mut Vec<PartialPlan>) {
        if let PlanNode::Join { left, right, .. } = node {
            visit(left, q, state, out);
            visit(right, q, state, out);
            let (ls, rs) = (left.table_set(q), right.table_set(q));
            state.trees.retain(|t| {
                let s = t.table_set(q);
                s != ls && s != rs
            });
            state.trees.push(node.clone());
            state.decided |= ls | rs;
            out.push(state.clone());
        }
    }
    let mut state = PartialPlan::initial(q);
    let mut out = Vec::new();
    visit(root, q, &mut state, &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub epsilon: f64,
    pub episodes_per_round: usize,
    pub select_k: usize,
    pub rounds: usize,
    pub sample_fraction: f64,
    pub seed: u64,
    pub cost_source: CostSource,
    pub features: FeatureConfig,
    pub net: NetConfig,
    /// Search space of the baseline plan the search starts from.
    pub baseline: OptimizerConfig,
    pub parallelism: Parallelism,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            epsilon: 0.3,
            episodes_per_round: 24,
            select_k: 4,
            rounds: 4,
            sample_fraction: 0.1,
            seed: 0,
            cost_source: CostSource::Tuples,
            features: FeatureConfig::default(),
            net: NetConfig {
                epochs: 150,
                ..NetConfig::default()
            },
            baseline: OptimizerConfig::default(),
            parallelism: Parallelism::default(),
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must be in [0, 1]"));
        }
        if self.episodes_per_round == 0 {
            return Err(Error::config("episodes_per_round", "must be positive"));
        }
        if self.select_k == 0 || self.select_k > self.episodes_per_round {
            return Err(Error::config(
                "select_k",
                "must be in 1..=episodes_per_round",
            ));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::config("sample_fraction", "must be in (0, 1]"));
        }
        self.net.validate()
    }
}

/// Training samples are capped at roughly this many sample-epochs per fit.
const TRAINING_BUDGET: usize = 60_000;

fn fit(samples: &[(Vec<f64>, f64)], cfg: &ExploreConfig, round: usize) -> Result<NetValueModel> {
    if samples.is_empty() {
        return Ok(NetValueModel::untrained(cfg.features));
    }
    let mut net = cfg.net.clone();
    net.epochs = net.epochs.min((TRAINING_BUDGET / samples.len()).max(10));
    net.seed = mix64(cfg.seed ^ net.seed ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    NetValueModel::train(samples, cfg.features, net)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreOutcome {
    pub plan: QueryPlan,
    /// Full-data measured cost of `plan`.
    pub measured_cost: f64,
    pub baseline: QueryPlan,
    pub baseline_cost: f64,
    /// False when zero rounds were requested and the baseline passed through.
    pub superoptimized: bool,
    pub status: String,
    pub executed: Vec<ExecutedPlan>,
    /// Distinct canonical plans among each round's episodes.
    pub distinct_per_round: Vec<usize>,
    pub experiences_added: usize,
}

/// Explore-then-verify search. Each round runs episodes, executes a diverse
/// subset on a data sample, records the runs in `store`, verifies the round's
/// best sampled plan on full data, and retrains the value model. The baseline
/// is always verified, so the result is never worse than it.
pub fn superoptimize_explore(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    cfg: &ExploreConfig,
    store: &mut ExperienceStore,
) -> Result<ExploreOutcome> {
    cfg.validate()?;
    let est = Estimator::new(query, stats)?;
    let baseline = optimize(query, stats, cfg.baseline)?.plan;
    let base_run = execute(db, &baseline)?;
    let baseline_cost = measured_cost(&base_run, cfg.cost_source);
    let mut executed = vec![ExecutedPlan::new(
        "baseline",
        &baseline,
        Some(baseline_cost),
        false,
    )];
    if cfg.rounds == 0 {
        return Ok(ExploreOutcome {
            plan: baseline.clone(),
            measured_cost: baseline_cost,
            baseline,
            baseline_cost,
            superoptimized: false,
            status: "no superoptimization performed".into(),
            executed,
            distinct_per_round: Vec::new(),
            experiences_added: 0,
        });
    }

    let fingerprint = query_fingerprint(query);
    let start_len = store.len();
    let mut augment: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut model = fit(&store.samples(), cfg, 0)?;
    let (mut best, mut best_run) = (baseline.clone(), base_run);
    let mut best_cost = baseline_cost;
    let mut verified: HashSet<u64> = HashSet::from([baseline.plan_id]);
    let mut distinct_per_round = Vec::with_capacity(cfg.rounds);
    let sample = ExecOptions {
        sample: Some(SampleSpec {
            fraction: cfg.sample_fraction,
            seed: cfg.seed,
        }),
        work_limit: None,
    };

    for round in 0..cfg.rounds {
        let episodes = par::map_range(cfg.parallelism, cfg.episodes_per_round, |e| {
            let seed = mix64(cfg.seed ^ mix64(((round as u64) << 32) | e as u64));
            run_episode(&est, &model, cfg.epsilon, seed)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        distinct_per_round.push(
            episodes
                .iter()
                .map(|p| p.canonical())
                .collect::<HashSet<_>>()
                .len(),
        );

        let chosen = select_diverse(&episodes, cfg.select_k, &model, &est)?;
        let limit = challenger_limit(&best_run, cfg.cost_source);
        let opts = ExecOptions {
            work_limit: Some(limit),
            ..sample
        };
        let runs = run_censored(db, &chosen, &opts, cfg.parallelism)?;
        let mut winner: Option<(f64, &QueryPlan)> = None;
        for (p, r) in chosen.iter().zip(&runs) {
            let c = cost_of(r, cfg.cost_source);
            executed.push(ExecutedPlan::new(
                format!("round {} sample", round + 1),
                p,
                c,
                true,
            ));
            let recorded = c.unwrap_or(best_cost);
            let features = featurize(&p.root, &est, cfg.features)?;
            store.push(Experience {
                fingerprint,
                features,
                measured: recorded,
                sampled: true,
            })?;
            for s in construction_states(&p.root, query).iter().rev().skip(1) {
                augment.push((s.features(&est, cfg.features)?, recorded));
            }
            if let Some(c) = c {
                if winner.is_none_or(|(wc, _)| c < wc) {
                    winner = Some((c, p));
                }
            }
        }

        if let Some((_, p)) = winner {
            if verified.insert(p.plan_id) {
                let opts =
                    ExecOptions::with_limit(Some(challenger_limit(&best_run, cfg.cost_source)));
                let c = match execute_with(db, p, &opts) {
                    Ok(r) => {
                        let c = measured_cost(&r, cfg.cost_source);
                        if c < best_cost {
                            best = p.clone();
                            best_cost = c;
                            best_run = r;
                        }
                        Some(c)
                    }
                    Err(Error::WorkLimitExceeded { .. }) => None,
                    Err(e) => return Err(e),
                };
                executed.push(ExecutedPlan::new(
                    format!("round {} verify", round + 1),
                    p,
                    c,
                    false,
                ));
            }
        }

        let mut samples = store.samples();
        samples.extend(min_by_features(&augment));
        model = fit(&samples, cfg, round + 1)?;
    }

    Ok(ExploreOutcome {
        plan: best,
        measured_cost: best_cost,
        baseline,
        baseline_cost,
        superoptimized: true,
        status: "completed".into(),
        executed,
        distinct_per_round,
        experiences_added: store.len() - start_len,
    })
}

/// Collapses identical feature vectors to their lowest cost, in first-seen order.
fn min_by_features(samples: &[(Vec<f64>, f64)]) -> Vec<(Vec<f64>, f64)> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for (f, c) in samples {
        let key: Vec<u64> = f.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&i) => out[i].1 = out[i].1.min(*c),
            None => {
                index.insert(key, out.len());
                out.push((f.clone(), *c));
            }
        }
    }
    out
}

/// Records `episodes` random plans (epsilon = 1) of `query`, plus the baseline
/// plan, as sampled experiences. Each run is capped at `censor_factor` times
/// the baseline's sampled work; capped runs are recorded at the cap. Returns
/// the number of experiences added.
#[allow(clippy::too_many_arguments)]
pub fn gather_experience(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    episodes: usize,
    sample_fraction: f64,
    censor_factor: u64,
    seed: u64,
    features: FeatureConfig,
    store: &mut ExperienceStore,
) -> Result<usize> {
    if censor_factor == 0 {
        return Err(Error::config("censor_factor", "must be positive"));
    }
    let est = Estimator::new(query, stats)?;
    let sample = SampleSpec {
        fraction: sample_fraction,
        seed,
    };
    let baseline = optimize(query, stats, OptimizerConfig::default())?.plan;
    let base = execute_with(
        db,
        &baseline,
        &ExecOptions {
            sample: Some(sample),
            work_limit: None,
        },
    )?;
    let cap = base.tuples_processed.max(1).saturating_mul(censor_factor);
    let untrained = NetValueModel::untrained(features);
    let mut plans = vec![baseline];
    let mut seen: HashSet<String> = HashSet::from([plans[0].canonical()]);
    for e in 0..episodes {
        let p = run_episode(&est, &untrained, 1.0, mix64(seed ^ mix64(e as u64 + 1)))?;
        if seen.insert(p.canonical()) {
            plans.push(p);
        }
    }
    let opts = ExecOptions {
        sample: Some(sample),
        work_limit: Some(cap),
    };
    let fingerprint = query_fingerprint(query);
    let runs = run_censored(db, &plans, &opts, Parallelism::default())?;
    for (p, r) in plans.iter().zip(&runs) {
        store.push(Experience {
            fingerprint,
            features: featurize(&p.root, &est, features)?,
            measured: r.as_ref().map_or(cap as f64, |r| r.tuples_processed as f64),
            sampled: true,
        })?;
    }
    Ok(plans.len())
}

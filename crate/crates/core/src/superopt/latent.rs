//! Plan search in the learned latent space: a pool of candidate plans is
//! embedded with the bottleneck network's encoder, and Bayesian optimization
//! proposes offsets from the baseline plan's embedding; the nearest pool plan
//! to each proposal is executed.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::explore::{run_episode, NetValueModel};
use super::features::{featurize, FeatureConfig};
use super::gp::{median_heuristic, GaussianProcess};
use super::net::{BottleneckNet, NetConfig};
use super::{challenger_limit, run_censored, ExecutedPlan};
use crate::catalog::{mix64, Database, Statistics};
use crate::engine::{
    execute, execute_with, measured_cost, CostSource, ExecOptions, QueryPlan, SampleSpec,
};
use crate::error::{Error, Result};
use crate::optimizer::{
    enumerate_all, optimize, plan_space_size, top_k_plans, EnumerateConfig, Estimator,
    OptimizerConfig,
};
use crate::par::Parallelism;
use crate::query::BoundQuery;

/// Distinct candidate plans with cached features and (once a network is
/// attached) latent points.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanPool {
    pub plans: Vec<QueryPlan>,
    pub features: Vec<Vec<f64>>,
    pub latent: Vec<Vec<f64>>,
}

impl PlanPool {
    /// Pool from explicit plans; duplicates (by canonical form) are dropped.
    /// Distinct plans must have distinct features.
    pub fn from_plans(plans: Vec<QueryPlan>, est: &Estimator, cfg: FeatureConfig) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut seen_features = HashSet::new();
        let mut pool = PlanPool {
            plans: Vec::new(),
            features: Vec::new(),
            latent: Vec::new(),
        };
        for p in plans {
            if !seen.insert(p.canonical()) {
                continue;
            }
            let f = featurize(&p.root, est, cfg)?;
            if !seen_features.insert(f.iter().map(|v| v.to_bits()).collect::<Vec<_>>()) {
                return Err(Error::Mismatch(format!(
                    "plan {} shares its features with another pool plan",
                    p.canonical()
                )));
            }
            pool.plans.push(p);
            pool.features.push(f);
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn position(&self, plan: &QueryPlan) -> Option<usize> {
        let c = plan.canonical();
        self.plans.iter().position(|p| p.canonical() == c)
    }

    /// Embeds every pool plan with `net`'s encoder.
    pub fn attach(&mut self, net: &BottleneckNet) -> Result<()> {
        self.latent = self
            .features
            .iter()
            .map(|f| net.encode(f))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Index of the pool plan whose latent point is nearest to `z`; ties go to
    /// the lowest plan id.
    pub fn decode_index(&self, z: &[f64]) -> Result<usize> {
        if self.plans.is_empty() {
            return Err(Error::Decode("empty plan pool".into()));
        }
        if self.latent.len() != self.plans.len() {
            return Err(Error::Decode(
                "pool has no latent points; attach a network first".into(),
            ));
        }
        let d = |p: &[f64]| -> f64 { p.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum() };
        Ok((0..self.plans.len())
            .min_by(|&a, &b| {
                d(&self.latent[a])
                    .total_cmp(&d(&self.latent[b]))
                    .then(self.plans[a].plan_id.cmp(&self.plans[b].plan_id))
            })
            .expect("non-empty"))
    }

    pub fn decode(&self, z: &[f64]) -> Result<&QueryPlan> {
        Ok(&self.plans[self.decode_index(z)?])
    }

    /// Per-dimension `(min, max)` of the latent points.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let dim = self.latent.first().map_or(0, Vec::len);
        (0..dim)
            .map(|j| {
                self.latent
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
                        (lo.min(z[j]), hi.max(z[j]))
                    })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    /// Plans executed after the baseline.
    pub budget: usize,
    /// Random candidate offsets scored per iteration.
    pub candidates: usize,
    /// Exploration margin of expected improvement, standardized units.
    pub xi: f64,
    /// GP observation noise, standardized units.
    pub noise: f64,
    /// Candidates around incumbents are drawn with this standard deviation,
    /// as a fraction of the kernel length scale.
    pub local_spread: f64,
    /// Executions are cut off at this multiple of the incumbent's work.
    pub censor_factor: u64,
    pub seed: u64,
    pub cost_source: CostSource,
}

impl Default for BayesConfig {
    fn default() -> Self {
        BayesConfig {
            budget: 20,
            candidates: 512,
            xi: 0.01,
            noise: 1e-6,
            local_spread: 0.5,
            censor_factor: 4,
            seed: 0,
            cost_source: CostSource::Tuples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BayesStatus {
    Completed,
    /// Every candidate decoded to an already executed plan three iterations
    /// in a row.
    LatentSpaceExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Offset from the baseline plan's latent point.
    pub offset: Vec<f64>,
    pub plan_id: u64,
    pub canonical: String,
    /// `None` when the run exceeded the censoring limit.
    pub measured: Option<f64>,
    pub incumbent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesOutcome {
    pub plan: QueryPlan,
    pub measured_cost: f64,
    pub baseline_cost: f64,
    pub status: BayesStatus,
    pub trace: Vec<TraceRow>,
}

impl BayesOutcome {
    /// CSV: iteration, offset components, plan id, measured cost (empty when
    /// censored), incumbent.
    pub fn trace_csv(&self) -> Result<String> {
        let dim = self.trace.first().map_or(0, |r| r.offset.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_string()];
        header.extend((0..dim).map(|i| format!("v{i}")));
        header.extend(["plan_id".into(), "measured_cost".into(), "incumbent".into()]);
        w.write_record(&header)?;
        for r in &self.trace {
            let mut rec = vec![r.iteration.to_string()];
            rec.extend(r.offset.iter().map(|v| v.to_string()));
            rec.push(format!("{:016x}", r.plan_id));
            rec.push(r.measured.map_or(String::new(), |c| c.to_string()));
            rec.push(r.incumbent.to_string());
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::Data(e.to_string()))
            .and_then(|b| String::from_utf8(b).map_err(|e| Error::Data(e.to_string())))
    }
}

/// Bayesian optimization over offsets `v̂` from the baseline's latent point.
///
/// The surrogate is a GP over observed `(latent point, ln(1 + cost))` pairs,
/// fitted to the residuals of the network's own prediction from the latent
/// point, so unexplored regions default to what the network learned. Each
/// iteration scores `candidates` random offsets (half near the best observed
/// points, half uniform over the pool's bounding box), decodes them, skips
/// plans already run, and executes the decoded plan with the highest expected
/// improvement. `baseline` is always executed first, so the result is never
/// worse than it.
pub fn bayes_superoptimize(
    db: &Database,
    pool: &PlanPool,
    net: &BottleneckNet,
    baseline: &QueryPlan,
    cfg: &BayesConfig,
) -> Result<BayesOutcome> {
    if cfg.budget == 0 || cfg.candidates == 0 {
        return Err(Error::config(
            "budget",
            "budget and candidate count must be positive",
        ));
    }
    let p1 = pool
        .position(baseline)
        .ok_or_else(|| Error::Argument("baseline plan must be in the pool".into()))?;
    if pool.latent.len() != pool.len() {
        return Err(Error::Decode(
            "pool has no latent points; attach a network first".into(),
        ));
    }
    let origin = pool.latent[p1].clone();
    let dim = origin.len();
    let length_scale = median_heuristic(&pool.latent);
    let bounds = pool.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0xba7e_5000));

    let first = execute(db, &pool.plans[p1])?;
    let base_cost = measured_cost(&first, cfg.cost_source);
    let mut best = (p1, base_cost, first);
    let mut xs = vec![origin.clone()];
    let mut ys = vec![base_cost.ln_1p()];
    let mut done: HashSet<usize> = HashSet::from([p1]);
    let mut trace = vec![TraceRow {
        iteration: 0,
        offset: vec![0.0; dim],
        plan_id: pool.plans[p1].plan_id,
        canonical: pool.plans[p1].canonical(),
        measured: Some(base_cost),
        incumbent: base_cost,
    }];
    let mut status = BayesStatus::Completed;
    let mut stale = 0;
    let prior = |z: &[f64]| net.predict_latent(z);

    for iteration in 1..=cfg.budget {
        let residuals = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| Ok(y - prior(x)?))
            .collect::<Result<Vec<f64>>>()?;
        let gp = GaussianProcess::fit(&xs, &residuals, length_scale, cfg.noise)?;
        let best_y = ys.iter().copied().fold(f64::INFINITY, f64::min);

        // local candidates centre on the three best observations
        let mut ranked: Vec<usize> = (0..xs.len()).collect();
        ranked.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
        ranked.truncate(3);
        let mut proposal: Option<(f64, usize, Vec<f64>)> = None;
        for c in 0..cfg.candidates {
            let z: Vec<f64> = if c % 2 == 0 {
                let centre = &xs[ranked[(c / 2) % ranked.len()]];
                centre
                    .iter()
                    .map(|v| {
                        v + cfg.local_spread * length_scale * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            } else {
                bounds
                    .iter()
                    .map(|&(lo, hi)| {
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    })
                    .collect()
            };
            let idx = pool.decode_index(&z)?;
            if done.contains(&idx) {
                continue;
            }
            let at = &pool.latent[idx];
            let shifted_best = best_y - prior(at)?;
            let ei = gp.expected_improvement(at, shifted_best, cfg.xi);
            if proposal.as_ref().is_none_or(|(b, _, _)| ei > *b) {
                proposal = Some((ei, idx, z));
            }
        }
        let Some((_, idx, z)) = proposal else {
            stale += 1;
            if stale >= 3 {
                status = BayesStatus::LatentSpaceExhausted;
                break;
            }
            continue;
        };
        stale = 0;
        done.insert(idx);
        let limit = challenger_limit(&best.2, cfg.cost_source).saturating_mul(cfg.censor_factor);
        let measured =
            match execute_with(db, &pool.plans[idx], &ExecOptions::with_limit(Some(limit))) {
                Ok(r) => {
                    let c = measured_cost(&r, cfg.cost_source);
                    if c < best.1 {
                        best = (idx, c, r);
                    }
                    Some(c)
                }
                Err(Error::WorkLimitExceeded { .. }) => None,
                Err(e) => return Err(e),
            };
        // a censored run is observed at the bound it exceeded
        let observed = measured.unwrap_or(match cfg.cost_source {
            CostSource::Tuples => limit as f64,
            CostSource::Wall => best.1 * cfg.censor_factor as f64,
        });
        xs.push(pool.latent[idx].clone());
        ys.push(observed.ln_1p());
        trace.push(TraceRow {
            iteration,
            offset: z.iter().zip(&origin).map(|(a, b)| a - b).collect(),
            plan_id: pool.plans[idx].plan_id,
            canonical: pool.plans[idx].canonical(),
            measured,
            incumbent: best.1,
        });
    }

    Ok(BayesOutcome {
        plan: pool.plans[best.0].clone(),
        measured_cost: best.1,
        baseline_cost: base_cost,
        status,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    pub features: FeatureConfig,
    pub net: NetConfig,
    pub bayes: BayesConfig,
    /// Use the exhaustive plan space as the pool when it has at most this
    /// many plans; otherwise top-ranked plans plus random episodes.
    pub pool_limit: usize,
    pub pool_top_k: usize,
    pub pool_episodes: usize,
    /// Pool plans executed to train the network (the baseline included).
    pub train_plans: usize,
    pub train_sample_fraction: f64,
    pub baseline: OptimizerConfig,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            features: FeatureConfig::default(),
            net: NetConfig::default(),
            bayes: BayesConfig::default(),
            pool_limit: 20_000,
            pool_top_k: 500,
            pool_episodes: 500,
            train_plans: 48,
            train_sample_fraction: 0.2,
            baseline: OptimizerConfig::default(),
            seed: 0,
            parallelism: Parallelism::default(),
        }
    }
}

/// Pool for `query`: the whole plan space when small enough, else the
/// top-ranked plans of the full space plus uniformly random episodes. The
/// baseline plan is always included.
pub fn build_pool(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    baseline: &QueryPlan,
    cfg: &LatentConfig,
) -> Result<PlanPool> {
    let est = Estimator::new(query, stats)?;
    let mut plans = vec![baseline.clone()];
    let small = query.tables.len() <= crate::optimizer::MAX_ENUMERATION_TABLES
        && plan_space_size(query, db.schema()) <= cfg.pool_limit as u128;
    if small {
        plans.extend(enumerate_all(
            query,
            db.schema(),
            EnumerateConfig {
                max_tables: crate::optimizer::MAX_ENUMERATION_TABLES,
            },
        )?);
    } else {
        plans.extend(
            top_k_plans(query, stats, cfg.pool_top_k, OptimizerConfig::exhaustive())?
                .into_iter()
                .map(|c| c.plan),
        );
        let model = NetValueModel::untrained(cfg.features);
        for e in 0..cfg.pool_episodes {
            plans.push(run_episode(
                &est,
                &model,
                1.0,
                mix64(cfg.seed ^ 0x9001 ^ e as u64),
            )?);
        }
    }
    let pool = PlanPool::from_plans(plans, &est, cfg.features)?;
    for p in &pool.plans {
        p.root.validate_for(query, db.schema())?;
    }
    Ok(pool)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentOutcome {
    pub bayes: BayesOutcome,
    pub baseline: QueryPlan,
    pub pool_size: usize,
    /// Sampled training executions, in run order.
    pub training: Vec<ExecutedPlan>,
    pub net_loss: f64,
}

/// The whole latent pipeline: pool, training executions on a data sample,
/// network fit, embedding, then Bayesian optimization from the baseline plan.
pub fn superoptimize_latent(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    cfg: &LatentConfig,
) -> Result<(LatentOutcome, BottleneckNet)> {
    latent_pipeline(db, query, stats, cfg, None)
}

/// [`superoptimize_latent`] with a previously trained network: no training
/// executions are made and `net` embeds the pool as is.
pub fn superoptimize_latent_with_net(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    cfg: &LatentConfig,
    net: BottleneckNet,
) -> Result<(LatentOutcome, BottleneckNet)> {
    latent_pipeline(db, query, stats, cfg, Some(net))
}

fn latent_pipeline(
    db: &Database,
    query: &BoundQuery,
    stats: &Statistics,
    cfg: &LatentConfig,
    pretrained: Option<BottleneckNet>,
) -> Result<(LatentOutcome, BottleneckNet)> {
    let baseline = optimize(query, stats, cfg.baseline)?.plan;
    let mut pool = build_pool(db, query, stats, &baseline, cfg)?;
    let (net, training) = match pretrained {
        Some(net) => (net, Vec::new()),
        None => train_on_pool(db, &pool, &baseline, cfg)?,
    };
    pool.attach(&net)?;

    let mut bayes_cfg = cfg.bayes.clone();
    bayes_cfg.seed = mix64(cfg.seed ^ bayes_cfg.seed ^ 0xb0);
    let bayes = bayes_superoptimize(db, &pool, &net, &baseline, &bayes_cfg)?;
    Ok((
        LatentOutcome {
            pool_size: pool.len(),
            bayes,
            baseline,
            training,
            net_loss: net.final_loss(),
        },
        net,
    ))
}

/// Executes a seeded subset of the pool (the baseline first) on a data sample
/// and fits the network to the measured costs.
fn train_on_pool(
    db: &Database,
    pool: &PlanPool,
    baseline: &QueryPlan,
    cfg: &LatentConfig,
) -> Result<(BottleneckNet, Vec<ExecutedPlan>)> {
    let p1 = pool.position(baseline).expect("baseline is pooled");
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0x7ea1));
    let mut picks = vec![p1];
    let others: Vec<usize> = (0..pool.len()).filter(|&i| i != p1).collect();
    let extra = (cfg.train_plans.max(1) - 1).min(others.len());
    picks.extend(
        rand::seq::index::sample(&mut rng, others.len(), extra)
            .into_iter()
            .map(|i| others[i]),
    );
    let train: Vec<QueryPlan> = picks.iter().map(|&i| pool.plans[i].clone()).collect();

    let sample = SampleSpec {
        fraction: cfg.train_sample_fraction,
        seed: cfg.seed,
    };
    let base_sample = crate::engine::execute_with(
        db,
        baseline,
        &ExecOptions {
            sample: Some(sample),
            work_limit: None,
        },
    )?;
    let limit = challenger_limit(&base_sample, cfg.bayes.cost_source)
        .saturating_mul(cfg.bayes.censor_factor);
    let runs = run_censored(
        db,
        &train[1..],
        &ExecOptions {
            sample: Some(sample),
            work_limit: Some(limit),
        },
        cfg.parallelism,
    )?;
    let censored = match cfg.bayes.cost_source {
        CostSource::Tuples => limit as f64,
        CostSource::Wall => {
            measured_cost(&base_sample, CostSource::Wall) * cfg.bayes.censor_factor as f64
        }
    };
    let base_c = measured_cost(&base_sample, cfg.bayes.cost_source);
    let mut training = vec![ExecutedPlan::new("train", baseline, Some(base_c), true)];
    let mut samples = vec![(pool.features[p1].clone(), base_c)];
    for ((i, p), r) in picks[1..].iter().zip(&train[1..]).zip(&runs) {
        let c = super::cost_of(r, cfg.bayes.cost_source);
        training.push(ExecutedPlan::new("train", p, c, true));
        samples.push((pool.features[*i].clone(), c.unwrap_or(censored)));
    }
    let mut net_cfg = cfg.net.clone();
    net_cfg.seed = mix64(cfg.seed ^ net_cfg.seed);
    Ok((BottleneckNet::train(&samples, net_cfg)?, training))
}

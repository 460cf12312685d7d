//! Experiments: run a plan-search strategy over a set of queries, measure the
//! chosen plans against the baseline optimizer, and compare strategies.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::synth::{generate_synth_db, random_query, SynthConfig};
use crate::catalog::{generate_movie_db, load_database, mix64, Database, GenConfig, Statistics};
use crate::engine::{execute, measured_cost, CostSource, QueryPlan};
use crate::error::{Error, Result};
use crate::optimizer::{optimize, OptimizerConfig};
use crate::par::Parallelism;
use crate::query::BoundQuery;
use crate::sqlfront::parse_query_file;
use crate::superopt::{
    superoptimize_explore, superoptimize_latent, superoptimize_topk, ExperienceStore,
    ExploreConfig, LatentConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// A database saved with `save_database`.
    Directory {
        path: PathBuf,
    },
    Movie(GenConfig),
    Synth(SynthConfig),
}

impl DataSource {
    pub fn load(&self) -> Result<Database> {
        match self {
            DataSource::Directory { path } => load_database(path),
            DataSource::Movie(cfg) => generate_movie_db(cfg),
            DataSource::Synth(cfg) => generate_synth_db(cfg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuerySource {
    /// A query file: one statement per line, `--` comments.
    File { path: PathBuf },
    /// Statements given inline; line numbers are 1-based positions.
    Sql { statements: Vec<String> },
    /// Seeded random queries over a synthetic database.
    Random { count: usize, tables: usize },
}

/// A query with the line it came from.
#[derive(Clone, Debug)]
pub struct NumberedQuery {
    pub line: usize,
    pub query: BoundQuery,
}

impl QuerySource {
    pub fn load(&self, db: &Database, seed: u64) -> Result<Vec<NumberedQuery>> {
        let bind_all = |text: &str| -> Result<Vec<NumberedQuery>> {
            parse_query_file(text)?
                .into_iter()
                .map(|l| {
                    let query = l
                        .query
                        .bind(db.schema(), &[])
                        .map_err(|e| e.at_line(l.line))?;
                    Ok(NumberedQuery {
                        line: l.line,
                        query,
                    })
                })
                .collect()
        };
        match self {
            QuerySource::File { path } => bind_all(&std::fs::read_to_string(path)?),
            QuerySource::Sql { statements } => {
                let mut out = Vec::with_capacity(statements.len());
                for (i, s) in statements.iter().enumerate() {
                    let mut q = bind_all(s).map_err(|e| match e {
                        Error::AtLine { source, .. } => source.at_line(i + 1),
                        e => e.at_line(i + 1),
                    })?;
                    if q.len() != 1 {
                        return Err(Error::Argument(format!(
                            "statement {} must hold exactly one query",
                            i + 1
                        )));
                    }
                    let mut nq = q.remove(0);
                    nq.line = i + 1;
                    out.push(nq);
                }
                Ok(out)
            }
            QuerySource::Random { count, tables } => (0..*count)
                .map(|i| {
                    let query = random_query(db, *tables, mix64(seed ^ (i as u64 + 1)))
                        .map_err(|e| e.at_line(i + 1))?;
                    Ok(NumberedQuery { line: i + 1, query })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    /// The default optimizer's plan, never executed during optimization.
    Baseline,
    /// Execute the k best-ranked plans and keep the cheapest.
    Topk {
        k: usize,
    },
    Explore(ExploreConfig),
    Latent(LatentConfig),
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Baseline => "baseline".into(),
            Strategy::Topk { k } => format!("topk({k})"),
            Strategy::Explore(c) => format!(
                "explore(eps={},E={},k={},R={})",
                c.epsilon, c.episodes_per_round, c.select_k, c.rounds
            ),
            Strategy::Latent(c) => format!("latent(B={})", c.bayes.budget),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub queries: QuerySource,
    pub strategy: Strategy,
    pub error_level: f64,
    pub seed: u64,
    #[serde(default)]
    pub cost_source: CostSource,
    /// Experience store for the explore strategy, read before and appended
    /// after the run.
    #[serde(default)]
    pub experience_path: Option<PathBuf>,
    /// Report prefix: `<output>.json` and `<output>.csv` are written.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.error_level.is_finite() && self.error_level >= 0.0) {
            return Err(Error::config("error_level", "must be a finite value >= 0"));
        }
        match &self.strategy {
            Strategy::Topk { k } if *k == 0 => Err(Error::config("k", "must be at least 1")),
            Strategy::Explore(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

/// Executions needed before optimization time is repaid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BreakEven {
    Never,
    After(f64),
}

impl BreakEven {
    /// `optimization / max(1, baseline - chosen)`, or `Never` when the chosen
    /// plan is not faster.
    pub fn compute(optimization_ns: u64, baseline_ns: u64, chosen_ns: u64) -> Self {
        if chosen_ns >= baseline_ns {
            BreakEven::Never
        } else {
            BreakEven::After(optimization_ns as f64 / (baseline_ns - chosen_ns).max(1) as f64)
        }
    }
}

impl std::fmt::Display for BreakEven {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BreakEven::Never => f.write_str("never"),
            BreakEven::After(x) => write!(f, "{}", x.ceil()),
        }
    }
}

impl Serialize for BreakEven {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BreakEven::Never => s.serialize_str("never"),
            BreakEven::After(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for BreakEven {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(BreakEven::After(x)),
            Raw::Str(s) if s == "never" => Ok(BreakEven::Never),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"never\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub line: usize,
    pub sql: String,
    pub baseline_plan: String,
    pub baseline_estimated_cost: f64,
    pub baseline_measured_cost: f64,
    pub baseline_wall_ns: u64,
    pub chosen_plan: String,
    pub chosen_plan_id: u64,
    pub chosen_measured_cost: f64,
    pub chosen_wall_ns: u64,
    /// Executions the strategy performed while searching.
    pub plans_executed: usize,
    pub optimization_wall_ns: u64,
    pub break_even_executions: BreakEven,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub strategy: String,
    pub seed: u64,
    pub error_level: f64,
    pub cost_source: CostSource,
    pub queries: Vec<QueryReport>,
}

impl ExperimentReport {
    /// Copy with every wall-clock field zeroed.
    pub fn without_timings(&self) -> ExperimentReport {
        let mut r = self.clone();
        for q in &mut r.queries {
            q.baseline_wall_ns = 0;
            q.chosen_wall_ns = 0;
            q.optimization_wall_ns = 0;
            q.break_even_executions = BreakEven::Never;
        }
        r
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "line",
            "strategy",
            "baseline_estimated_cost",
            "baseline_measured_cost",
            "chosen_measured_cost",
            "plans_executed",
            "optimization_wall_ns",
            "baseline_wall_ns",
            "chosen_wall_ns",
            "break_even_executions",
            "chosen_plan",
            "status",
        ])?;
        for q in &self.queries {
            w.write_record([
                q.line.to_string(),
                self.strategy.clone(),
                q.baseline_estimated_cost.to_string(),
                q.baseline_measured_cost.to_string(),
                q.chosen_measured_cost.to_string(),
                q.plans_executed.to_string(),
                q.optimization_wall_ns.to_string(),
                q.baseline_wall_ns.to_string(),
                q.chosen_wall_ns.to_string(),
                q.break_even_executions.to_string(),
                q.chosen_plan.clone(),
                q.status.clone(),
            ])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Fastest of three full-data runs, in nanoseconds.
fn wall_ns(db: &Database, plan: &QueryPlan) -> Result<u64> {
    let mut best = u64::MAX;
    for _ in 0..3 {
        best = best.min(execute(db, plan)?.wall_ns);
    }
    Ok(best)
}

struct Choice {
    plan: QueryPlan,
    executed: usize,
    status: String,
}

fn choose(
    db: &Database,
    q: &BoundQuery,
    stats: &Statistics,
    strategy: &Strategy,
    source: CostSource,
    seed: u64,
    store: &mut ExperienceStore,
) -> Result<Choice> {
    Ok(match strategy {
        Strategy::Baseline => Choice {
            plan: optimize(q, stats, OptimizerConfig::default())?.plan,
            executed: 0,
            status: "baseline".into(),
        },
        Strategy::Topk { k } => {
            let out = superoptimize_topk(
                db,
                q,
                stats,
                *k,
                OptimizerConfig::default(),
                source,
                Parallelism::default(),
            )?;
            Choice {
                plan: out.plan,
                executed: out.executed.len(),
                status: format!("rank {} of {}", out.rank, out.executed.len()),
            }
        }
        Strategy::Explore(c) => {
            let cfg = ExploreConfig {
                seed: mix64(c.seed ^ seed),
                cost_source: source,
                ..c.clone()
            };
            let out = superoptimize_explore(db, q, stats, &cfg, store)?;
            Choice {
                plan: out.plan,
                executed: out.executed.len(),
                status: out.status,
            }
        }
        Strategy::Latent(c) => {
            let (out, _) = superoptimize_latent(db, q, stats, &latent_config_for(c, source, seed))?;
            Choice {
                plan: out.bayes.plan,
                executed: out.training.len() + out.bayes.trace.len(),
                status: format!("{:?}, pool of {}", out.bayes.status, out.pool_size),
            }
        }
    })
}

/// Sub-seed of the query on `line`; every strategy derives its randomness
/// from it, so results do not depend on query order or parallelism.
pub fn query_seed(seed: u64, line: usize) -> u64 {
    mix64(seed ^ line as u64)
}

/// `c` with seeds specialized to one query and the cost source applied.
pub fn latent_config_for(c: &LatentConfig, source: CostSource, query_seed: u64) -> LatentConfig {
    let mut cfg = c.clone();
    cfg.seed = mix64(c.seed ^ query_seed);
    cfg.bayes.seed = mix64(c.bayes.seed ^ query_seed);
    cfg.bayes.cost_source = source;
    cfg
}

/// Runs one query under `strategy` and measures the outcome on full data.
#[allow(clippy::too_many_arguments)]
pub fn run_query(
    db: &Database,
    nq: &NumberedQuery,
    stats: &Statistics,
    strategy: &Strategy,
    source: CostSource,
    seed: u64,
    store: &mut ExperienceStore,
) -> Result<QueryReport> {
    let q = &nq.query;
    let base = optimize(q, stats, OptimizerConfig::default())?;
    let t = Instant::now();
    let choice = choose(db, q, stats, strategy, source, seed, store)?;
    let optimization_wall_ns = t.elapsed().as_nanos() as u64;

    let base_cost = measured_cost(&execute(db, &base.plan)?, source);
    let chosen_cost = measured_cost(&execute(db, &choice.plan)?, source);
    let (baseline_wall_ns, chosen_wall_ns) = if choice.plan.canonical() == base.plan.canonical() {
        let w = wall_ns(db, &base.plan)?;
        (w, w)
    } else {
        (wall_ns(db, &base.plan)?, wall_ns(db, &choice.plan)?)
    };
    Ok(QueryReport {
        line: nq.line,
        sql: q.to_string(),
        baseline_plan: base.plan.canonical(),
        baseline_estimated_cost: base.estimated_cost,
        baseline_measured_cost: base_cost,
        baseline_wall_ns,
        chosen_plan: choice.plan.canonical(),
        chosen_plan_id: choice.plan.plan_id,
        chosen_measured_cost: chosen_cost,
        chosen_wall_ns,
        plans_executed: choice.executed,
        optimization_wall_ns,
        break_even_executions: BreakEven::compute(
            optimization_wall_ns,
            baseline_wall_ns,
            chosen_wall_ns,
        ),
        status: choice.status,
    })
}

fn run_loaded(
    db: &Database,
    queries: &[NumberedQuery],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let stats = Statistics::collect(db, cfg.error_level, cfg.seed)?;
    let mut store = match &cfg.experience_path {
        Some(p) if p.exists() => ExperienceStore::read_csv(p)?,
        _ => ExperienceStore::new(),
    };
    let before = store.len();
    let mut reports = Vec::with_capacity(queries.len());
    for nq in queries {
        let seed = query_seed(cfg.seed, nq.line);
        let r = run_query(
            db,
            nq,
            &stats,
            &cfg.strategy,
            cfg.cost_source,
            seed,
            &mut store,
        )
        .map_err(|e| e.at_line(nq.line))?;
        reports.push(r);
    }
    if let Some(p) = &cfg.experience_path {
        store.append_csv(p, before)?;
    }
    Ok(ExperimentReport {
        strategy: cfg.strategy.name(),
        seed: cfg.seed,
        error_level: cfg.error_level,
        cost_source: cfg.cost_source,
        queries: reports,
    })
}

/// Loads data and queries, runs the strategy on every query in order, and
/// writes the report when `cfg.output` is set. Errors carry the line of the
/// failing query.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let db = cfg.data.load()?;
    let queries = cfg.queries.load(&db, cfg.seed)?;
    let report = run_loaded(&db, &queries, cfg)?;
    if let Some(out) = &cfg.output {
        write_json_and_csv(out, &report, &report.to_csv()?)?;
    }
    Ok(report)
}

/// Writes `<prefix>.json` and `<prefix>.csv`.
pub fn write_json_and_csv<T: Serialize>(prefix: &Path, value: &T, csv: &str) -> Result<()> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(
        prefix.with_extension("json"),
        serde_json::to_string_pretty(value)?,
    )?;
    std::fs::write(prefix.with_extension("csv"), csv)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub strategies: Vec<String>,
    pub query_lines: Vec<usize>,
    /// `measured[s][q]`: full-data measured cost of strategy `s` on query `q`.
    pub measured: Vec<Vec<f64>>,
    /// `measured` divided by the baseline's cost on the same query.
    pub normalized: Vec<Vec<f64>>,
    pub reports: Vec<ExperimentReport>,
}

impl CompareReport {
    pub fn without_timings(&self) -> CompareReport {
        CompareReport {
            reports: self
                .reports
                .iter()
                .map(ExperimentReport::without_timings)
                .collect(),
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["strategy".to_string()];
        header.extend(self.query_lines.iter().map(|l| format!("q{l}")));
        w.write_record(&header)?;
        for (name, row) in self.strategies.iter().zip(&self.normalized) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    pub fn render_table(&self) -> String {
        let width = self
            .strategies
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(8)
            .max(8);
        let mut s = format!("{:<width$}", "strategy");
        for l in &self.query_lines {
            let _ = write!(s, " {:>8}", format!("q{l}"));
        }
        let _ = writeln!(s, " {:>8}", "mean");
        for (name, row) in self.strategies.iter().zip(&self.normalized) {
            let _ = write!(s, "{name:<width$}");
            for x in row {
                let _ = write!(s, " {x:>8.3}");
            }
            let mean = row.iter().sum::<f64>() / row.len().max(1) as f64;
            let _ = writeln!(s, " {mean:>8.3}");
        }
        s
    }
}

/// Runs every strategy on the same data, queries and seed. A baseline column
/// is added first when missing; costs are normalized by it.
pub fn compare_strategies(
    cfg: &ExperimentConfig,
    strategies: &[Strategy],
) -> Result<CompareReport> {
    let mut all = vec![Strategy::Baseline];
    all.extend(
        strategies
            .iter()
            .filter(|s| **s != Strategy::Baseline)
            .cloned(),
    );
    let db = cfg.data.load()?;
    let queries = cfg.queries.load(&db, cfg.seed)?;
    let mut reports = Vec::with_capacity(all.len());
    for s in &all {
        let c = ExperimentConfig {
            strategy: s.clone(),
            output: None,
            ..cfg.clone()
        };
        reports.push(run_loaded(&db, &queries, &c)?);
    }
    let measured: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| r.queries.iter().map(|q| q.chosen_measured_cost).collect())
        .collect();
    let normalized = measured
        .iter()
        .map(|row| {
            row.iter()
                .zip(&measured[0])
                .map(|(&c, &b)| {
                    if b > 0.0 {
                        c / b
                    } else if c == b {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect();
    let report = CompareReport {
        strategies: all.iter().map(Strategy::name).collect(),
        query_lines: queries.iter().map(|q| q.line).collect(),
        measured,
        normalized,
        reports,
    };
    if let Some(out) = &cfg.output {
        write_json_and_csv(out, &report, &report.to_csv()?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn break_even_guards_against_no_savings() {
        assert_eq!(BreakEven::compute(1000, 50, 50), BreakEven::Never);
        assert_eq!(BreakEven::compute(1000, 50, 70), BreakEven::Never);
        assert_eq!(BreakEven::compute(1000, 50, 40), BreakEven::After(100.0));
        assert_eq!(BreakEven::Never.to_string(), "never");
        assert_eq!(
            serde_json::to_string(&BreakEven::Never).unwrap(),
            "\"never\""
        );
        let back: BreakEven = serde_json::from_str("12.5").unwrap();
        assert_eq!(back, BreakEven::After(12.5));
        assert!(serde_json::from_str::<BreakEven>("\"soon\"").is_err());
    }
}

//! `qsuper`: data generation, planning, superoptimization experiments, the
//! bespoke-engine benchmark and query-log analysis.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
//! violation (including panics).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qsuper::bespoke::bench_compare;
use qsuper::catalog::synth::{random_query, SynthConfig};
use qsuper::catalog::{save_database, GenConfig, Statistics};
use qsuper::engine::CostSource;
use qsuper::optimizer::{top_k_plans, OptimizerConfig};
use qsuper::par::Parallelism;
use qsuper::superopt::{
    superoptimize_latent, superoptimize_latent_with_net, superoptimize_topk_budget, BottleneckNet,
    ExploreConfig, FeatureConfig, LatentConfig, NetConfig,
};
use qsuper::workbench::{
    compare_strategies, latent_config_for, query_seed, run_experiment, DataSource,
    ExperimentConfig, QuerySource, Strategy,
};
use qsuper::workload::{aggregate_csv, bucket_report, AnalyzerConfig};
use qsuper::{Error, Result};

/// `println!` that stops quietly when stdout is closed (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

/// `print!` counterpart of [`say!`].
macro_rules! show {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "qsuper", version, about = "Query superoptimization workbench")]
struct Cli {
    /// Seed for every random choice; fixed seeds reproduce plan choices and costs.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Multiplicative noise applied to optimizer statistics (0 = exact).
    #[arg(long, global = true, default_value_t = 0.0)]
    error_level: f64,
    /// Cost that superoptimizers minimize.
    #[arg(long, global = true, default_value = "tuples", value_parser = parse_cost)]
    cost: CostSource,
    /// Output path: a directory for `gen`, a file prefix elsewhere.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_cost(s: &str) -> std::result::Result<CostSource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a database and save it to --out.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Print the optimizer's plan (or ranked plans) for each query as JSON.
    Optimize {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        queries: QueryArgs,
        /// Emit the k best-ranked plans.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Search for plans faster than the optimizer's by executing candidates.
    #[command(subcommand)]
    Superopt(SuperoptCommand),
    /// Time the bitmap engine against the generic engine.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Bucket a query log's templates by lifespan.
    Analyze {
        /// CSV log: timestamp, duration_ms, sql[, executions].
        log: PathBuf,
        /// Templates seen fewer times than this count as ad hoc.
        #[arg(long, default_value_t = 2)]
        min_executions: u64,
    },
    /// Run several strategies on the same queries and normalize by the baseline.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        queries: QueryArgs,
        /// Comma-separated: baseline, topk:K, explore, latent[:BUDGET].
        #[arg(long, default_value = "topk:5,explore,latent")]
        strategies: String,
    },
}

#[derive(Subcommand, Debug)]
enum GenCommand {
    /// The actor / movie / company database.
    Movie(MovieArgs),
    /// A random foreign-key chain of tables, optionally with a query file.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        /// Also write this many random queries to <out>/queries.sql.
        #[arg(long, default_value_t = 0)]
        queries: usize,
        #[arg(long, default_value_t = 4)]
        query_tables: usize,
    },
}

#[derive(Args, Debug, Clone)]
struct MovieArgs {
    #[arg(long, default_value_t = GenConfig::default().n_actors)]
    actors: usize,
    #[arg(long, default_value_t = GenConfig::default().n_movies)]
    movies: usize,
    #[arg(long, default_value_t = GenConfig::default().n_companies)]
    companies: usize,
    #[arg(long, default_value_t = GenConfig::default().stars_per_movie)]
    stars_per_movie: usize,
    #[arg(long, default_value_t = GenConfig::default().companies_per_movie)]
    companies_per_movie: usize,
    /// Zipf exponent of actor and company popularity.
    #[arg(long, default_value_t = GenConfig::default().skew)]
    skew: f64,
    /// Five comma-separated probabilities for ratings 1 to 5.
    #[arg(long, value_delimiter = ',', num_args = 5, default_values_t = GenConfig::default().rating_distribution)]
    rating_distribution: Vec<f64>,
}

impl MovieArgs {
    fn config(&self, seed: u64) -> GenConfig {
        let mut rating_distribution = [0.0; 5];
        rating_distribution.copy_from_slice(&self.rating_distribution);
        GenConfig {
            seed,
            n_actors: self.actors,
            n_movies: self.movies,
            n_companies: self.companies,
            stars_per_movie: self.stars_per_movie,
            companies_per_movie: self.companies_per_movie,
            skew: self.skew,
            rating_distribution,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthConfig::default().n_tables)]
    tables: usize,
    #[arg(long, default_value_t = SynthConfig::default().min_rows)]
    min_rows: usize,
    #[arg(long, default_value_t = SynthConfig::default().max_rows)]
    max_rows: usize,
    #[arg(long, default_value_t = SynthConfig::default().skew)]
    skew: f64,
}

impl SynthArgs {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            n_tables: self.tables,
            min_rows: self.min_rows,
            max_rows: self.max_rows,
            skew: self.skew,
        }
    }
}

/// Where the database comes from: a saved directory, or generated in memory.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct DataArgs {
    /// Database directory written by `gen`.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Generate the default movie database.
    #[arg(long)]
    movie: bool,
    /// Generate a synthetic database with this many tables.
    #[arg(long)]
    synth_tables: Option<usize>,
}

impl DataArgs {
    fn source(&self, seed: u64) -> DataSource {
        match (&self.db, self.synth_tables) {
            (Some(path), _) => DataSource::Directory { path: path.clone() },
            (None, Some(n)) => DataSource::Synth(SynthConfig {
                seed,
                n_tables: n,
                ..SynthConfig::default()
            }),
            (None, None) => DataSource::Movie(GenConfig {
                seed,
                ..GenConfig::default()
            }),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct QueryArgs {
    /// Query file: one statement per line, `--` comments.
    #[arg(
        long,
        required_unless_present = "random_queries",
        conflicts_with = "random_queries"
    )]
    queries: Option<PathBuf>,
    /// Seeded random queries over a synthetic database.
    #[arg(long)]
    random_queries: Option<usize>,
    /// Tables per random query.
    #[arg(long, default_value_t = 4)]
    query_tables: usize,
}

impl QueryArgs {
    fn source(&self) -> QuerySource {
        match (&self.queries, self.random_queries) {
            (Some(path), _) => QuerySource::File { path: path.clone() },
            (None, count) => QuerySource::Random {
                count: count.unwrap_or(0),
                tables: self.query_tables,
            },
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SpaceArgs {
    /// Allow bushy join trees.
    #[arg(long)]
    bushy: bool,
    /// Allow cross products.
    #[arg(long)]
    cross_joins: bool,
}

impl SpaceArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            allow_cross_joins: self.cross_joins,
            bushy: self.bushy,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct NetArgs {
    #[arg(long)]
    hidden1: Option<usize>,
    #[arg(long)]
    bottleneck: Option<usize>,
    #[arg(long)]
    hidden2: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Largest query size the plan features encode.
    #[arg(long)]
    feature_tables: Option<usize>,
}

impl NetArgs {
    fn apply(&self, net: &mut NetConfig, features: &mut FeatureConfig) {
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut net.hidden1, self.hidden1);
        set(&mut net.bottleneck, self.bottleneck);
        set(&mut net.hidden2, self.hidden2);
        set(&mut net.epochs, self.epochs);
        set(&mut net.batch_size, self.batch_size);
        set(&mut features.max_tables, self.feature_tables);
        if let Some(v) = self.learning_rate {
            net.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            net.momentum = v;
        }
    }
}

#[derive(Subcommand, Debug)]
enum SuperoptCommand {
    /// Execute the k best-ranked plans and keep the fastest.
    Topk {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        queries: QueryArgs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Instead of a fixed k, execute ranked plans (up to --k) until this
        /// many milliseconds of optimization time are spent.
        #[arg(long)]
        budget_ms: Option<u64>,
    },
    /// Episodic plan construction with a learned value model.
    Explore {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        queries: QueryArgs,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        episodes_per_round: Option<usize>,
        #[arg(long)]
        select_k: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        sample_fraction: Option<f64>,
        /// Experience store CSV, read before and appended after the run.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Bayesian optimization in a learned latent plan space.
    Latent {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        queries: QueryArgs,
        /// Plans executed after the baseline.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        censor_factor: Option<u64>,
        #[arg(long)]
        pool_limit: Option<usize>,
        #[arg(long)]
        pool_top_k: Option<usize>,
        #[arg(long)]
        pool_episodes: Option<usize>,
        #[arg(long)]
        train_plans: Option<usize>,
        #[arg(long)]
        train_sample_fraction: Option<f64>,
        /// Write the optimization trace of query on line L to <trace>.qL.csv.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Save the trained network of query on line L to <save-net>.qL.net.
        #[arg(long)]
        save_net: Option<PathBuf>,
        /// Use this network instead of training one per query.
        #[arg(long)]
        load_net: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        net: NetArgs,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Generic engine vs. the specialized index on the actor/company query.
    Bespoke {
        /// Saved movie database; the default one is generated otherwise.
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        queries: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    std::panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}

fn experiment(
    cli: &Cli,
    data: &DataArgs,
    queries: &QueryArgs,
    strategy: Strategy,
) -> ExperimentConfig {
    ExperimentConfig {
        data: data.source(cli.seed),
        queries: queries.source(),
        strategy,
        error_level: cli.error_level,
        seed: cli.seed,
        cost_source: cli.cost,
        experience_path: None,
        output: cli.out.clone(),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(g) => gen(cli, g),
        Command::Optimize {
            data,
            queries,
            k,
            space,
        } => {
            let cfg = experiment(cli, data, queries, Strategy::Baseline);
            cfg.validate()?;
            let db = cfg.data.load()?;
            let stats = Statistics::collect(&db, cfg.error_level, cfg.seed)?;
            let mut out = Vec::new();
            for nq in cfg.queries.load(&db, cfg.seed)? {
                let ranked = top_k_plans(&nq.query, &stats, *k, space.config())
                    .map_err(|e| e.at_line(nq.line))?;
                let plans: Vec<_> = ranked
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        json!({
                            "rank": i + 1,
                            "plan": c.plan,
                            "canonical": c.plan.canonical(),
                            "estimated_cost": c.estimated_cost,
                            "estimated_rows": c.estimated_rows,
                        })
                    })
                    .collect();
                out.push(json!({ "line": nq.line, "sql": nq.query.to_string(), "plans": plans }));
            }
            emit_json(cli.out.as_deref(), &out)
        }
        Command::Superopt(s) => superopt(cli, s),
        Command::Bench(BenchCommand::Bespoke { db, queries }) => {
            let source = match db {
                Some(path) => DataSource::Directory { path: path.clone() },
                None => DataSource::Movie(GenConfig {
                    seed: cli.seed,
                    ..GenConfig::default()
                }),
            };
            let report = bench_compare(&source.load()?, *queries, cli.seed)?;
            let table = report.render_table();
            show!("{table}");
            if let Some(out) = &cli.out {
                write_text(
                    &out.with_extension("json"),
                    &serde_json::to_string_pretty(&report)?,
                )?;
                write_text(&out.with_extension("txt"), &table)?;
            }
            Ok(())
        }
        Command::Analyze {
            log,
            min_executions,
        } => {
            if *min_executions == 0 {
                return Err(Error::Argument(
                    "--min-executions must be at least 1".into(),
                ));
            }
            let agg = aggregate_csv(std::fs::File::open(log)?)?;
            let report = bucket_report(
                &agg,
                AnalyzerConfig {
                    min_executions: *min_executions,
                },
            );
            let table = report.render_table();
            show!("{table}");
            if let Some(out) = &cli.out {
                write_text(&out.with_extension("csv"), &report.to_csv()?)?;
                write_text(&out.with_extension("txt"), &table)?;
            }
            Ok(())
        }
        Command::Compare {
            data,
            queries,
            strategies,
        } => {
            let list = strategies
                .split(',')
                .map(|s| parse_strategy(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            let cfg = experiment(cli, data, queries, Strategy::Baseline);
            let report = compare_strategies(&cfg, &list)?;
            show!("{}", report.render_table());
            Ok(())
        }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a)));
    let num = |a: Option<&str>, default: usize| -> Result<usize> {
        a.map_or(Ok(default), |a| {
            a.parse()
                .map_err(|_| Error::Argument(format!("bad number {a:?} in strategy {s:?}")))
        })
    };
    match name {
        "baseline" => Ok(Strategy::Baseline),
        "topk" => Ok(Strategy::Topk { k: num(arg, 5)? }),
        "explore" => Ok(Strategy::Explore(ExploreConfig::default())),
        "latent" => {
            let mut c = LatentConfig::default();
            c.bayes.budget = num(arg, c.bayes.budget)?;
            Ok(Strategy::Latent(c))
        }
        _ => Err(Error::Argument(format!(
            "unknown strategy {s:?} (expected baseline, topk:K, explore or latent[:B])"
        ))),
    }
}

fn gen(cli: &Cli, g: &GenCommand) -> Result<()> {
    let dir = cli
        .out
        .as_deref()
        .ok_or_else(|| Error::Argument("gen needs --out <directory>".into()))?;
    match g {
        GenCommand::Movie(m) => {
            let db = DataSource::Movie(m.config(cli.seed)).load()?;
            save_database(&db, dir)?;
            summarize(&db);
        }
        GenCommand::Synth {
            synth,
            queries,
            query_tables,
        } => {
            let db = DataSource::Synth(synth.config(cli.seed)).load()?;
            save_database(&db, dir)?;
            summarize(&db);
            if *queries > 0 {
                let mut text = String::new();
                for i in 0..*queries {
                    let q = random_query(&db, *query_tables, query_seed(cli.seed, i + 1))?;
                    text.push_str(&q.to_string());
                    text.push('\n');
                }
                write_text(&dir.join("queries.sql"), &text)?;
            }
        }
    }
    Ok(())
}

fn summarize(db: &qsuper::catalog::Database) {
    for t in db.tables() {
        say!("{:<12} {:>10} rows", t.name(), t.row_count());
    }
}

fn superopt(cli: &Cli, s: &SuperoptCommand) -> Result<()> {
    match s {
        SuperoptCommand::Topk {
            data,
            queries,
            k,
            budget_ms: None,
        } => report(run_experiment(&experiment(
            cli,
            data,
            queries,
            Strategy::Topk { k: *k },
        ))?),
        SuperoptCommand::Topk {
            data,
            queries,
            k,
            budget_ms: Some(ms),
        } => {
            let cfg = experiment(cli, data, queries, Strategy::Topk { k: *k });
            cfg.validate()?;
            let db = cfg.data.load()?;
            let stats = Statistics::collect(&db, cfg.error_level, cfg.seed)?;
            let mut out = Vec::new();
            for nq in cfg.queries.load(&db, cfg.seed)? {
                let o = superoptimize_topk_budget(
                    &db,
                    &nq.query,
                    &stats,
                    Duration::from_millis(*ms),
                    *k,
                    OptimizerConfig::default(),
                    cfg.cost_source,
                )
                .map_err(|e| e.at_line(nq.line))?;
                say!(
                    "q{:<4} baseline {:>14.0}  chosen {:>14.0}  rank {} of {}",
                    nq.line,
                    o.baseline_cost,
                    o.measured_cost,
                    o.rank,
                    o.executed.len()
                );
                out.push(json!({ "line": nq.line, "outcome": o }));
            }
            match &cli.out {
                Some(p) => write_text(
                    &p.with_extension("json"),
                    &serde_json::to_string_pretty(&out)?,
                ),
                None => Ok(()),
            }
        }
        SuperoptCommand::Explore {
            data,
            queries,
            epsilon,
            episodes_per_round,
            select_k,
            rounds,
            sample_fraction,
            store,
            sequential,
            net,
        } => {
            let mut c = ExploreConfig::default();
            c.epsilon = epsilon.unwrap_or(c.epsilon);
            c.episodes_per_round = episodes_per_round.unwrap_or(c.episodes_per_round);
            c.select_k = select_k.unwrap_or(c.select_k);
            c.rounds = rounds.unwrap_or(c.rounds);
            c.sample_fraction = sample_fraction.unwrap_or(c.sample_fraction);
            if *sequential {
                c.parallelism = Parallelism::Sequential;
            }
            net.apply(&mut c.net, &mut c.features);
            let mut cfg = experiment(cli, data, queries, Strategy::Explore(c));
            cfg.experience_path = store.clone();
            report(run_experiment(&cfg)?)
        }
        SuperoptCommand::Latent {
            data,
            queries,
            budget,
            candidates,
            xi,
            censor_factor,
            pool_limit,
            pool_top_k,
            pool_episodes,
            train_plans,
            train_sample_fraction,
            trace,
            save_net,
            load_net,
            sequential,
            net,
        } => {
            let mut c = LatentConfig::default();
            c.bayes.budget = budget.unwrap_or(c.bayes.budget);
            c.bayes.candidates = candidates.unwrap_or(c.bayes.candidates);
            c.bayes.xi = xi.unwrap_or(c.bayes.xi);
            c.bayes.censor_factor = censor_factor.unwrap_or(c.bayes.censor_factor);
            c.pool_limit = pool_limit.unwrap_or(c.pool_limit);
            c.pool_top_k = pool_top_k.unwrap_or(c.pool_top_k);
            c.pool_episodes = pool_episodes.unwrap_or(c.pool_episodes);
            c.train_plans = train_plans.unwrap_or(c.train_plans);
            c.train_sample_fraction = train_sample_fraction.unwrap_or(c.train_sample_fraction);
            if *sequential {
                c.parallelism = Parallelism::Sequential;
            }
            net.apply(&mut c.net, &mut c.features);
            let pretrained = load_net.as_deref().map(BottleneckNet::load).transpose()?;

            let cfg = experiment(cli, data, queries, Strategy::Latent(c.clone()));
            cfg.validate()?;
            let db = cfg.data.load()?;
            let stats = Statistics::collect(&db, cfg.error_level, cfg.seed)?;
            let mut out = Vec::new();
            for nq in cfg.queries.load(&db, cfg.seed)? {
                let qc = latent_config_for(&c, cfg.cost_source, query_seed(cfg.seed, nq.line));
                let (o, trained) = match &pretrained {
                    Some(n) => {
                        superoptimize_latent_with_net(&db, &nq.query, &stats, &qc, n.clone())
                    }
                    None => superoptimize_latent(&db, &nq.query, &stats, &qc),
                }
                .map_err(|e| e.at_line(nq.line))?;
                say!(
                    "q{:<4} baseline {:>14.0}  chosen {:>14.0}  pool {:>6}  executed {:>3}  {:?}",
                    nq.line,
                    o.bayes.baseline_cost,
                    o.bayes.measured_cost,
                    o.pool_size,
                    o.training.len() + o.bayes.trace.len(),
                    o.bayes.status
                );
                if let Some(t) = trace {
                    write_text(&suffixed(t, nq.line, "csv"), &o.bayes.trace_csv()?)?;
                }
                if let Some(p) = save_net {
                    let path = suffixed(p, nq.line, "net");
                    ensure_parent(&path)?;
                    trained.save(&path)?;
                }
                out.push(json!({ "line": nq.line, "sql": nq.query.to_string(), "outcome": o }));
            }
            match &cli.out {
                Some(p) => write_text(
                    &p.with_extension("json"),
                    &serde_json::to_string_pretty(&out)?,
                ),
                None => Ok(()),
            }
        }
    }
}

fn report(r: qsuper::workbench::ExperimentReport) -> Result<()> {
    say!(
        "{:<5} {:>14} {:>14} {:>6} {:>12}  status",
        "query",
        "baseline",
        "chosen",
        "plans",
        "break-even"
    );
    for q in &r.queries {
        say!(
            "q{:<4} {:>14.0} {:>14.0} {:>6} {:>12}  {}",
            q.line,
            q.baseline_measured_cost,
            q.chosen_measured_cost,
            q.plans_executed,
            q.break_even_executions.to_string(),
            q.status
        );
    }
    Ok(())
}

/// `<prefix>.q<line>.<ext>`
fn suffixed(prefix: &Path, line: usize, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".q{line}.{ext}"));
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    Ok(std::fs::write(path, text)?)
}

fn emit_json(out: Option<&Path>, value: &[serde_json::Value]) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => write_text(&p.with_extension("json"), &text),
        None => {
            say!("{text}");
            Ok(())
        }
    }
}

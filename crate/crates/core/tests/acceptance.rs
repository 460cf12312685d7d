//! The nine acceptance criteria. Runs without the libtest harness so each
//! criterion prints exactly one PASS or FAIL line, then a summary. A FAIL is a
//! reported result, not a broken build: the process exits non-zero only when
//! `QSUPER_ACCEPTANCE_STRICT=1` is set. Pass criterion numbers as arguments to
//! run a subset.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::buckets::bucket_log;
use qsuper::bespoke::{bench_compare, build_index, q1_workload};
use qsuper::catalog::synth::{
    cross_join_fixture, generate_synth_db, random_query, skewed_instance, SynthConfig,
};
use qsuper::catalog::{
    generate_movie_db, true_cardinality, Database, GenConfig, Statistics, Value,
};
use qsuper::engine::{execute, CostSource};
use qsuper::optimizer::{
    cost_plan, enumerate_all, optimize, EnumerateConfig, Estimator, OptimizerConfig,
};
use qsuper::par::Parallelism;
use qsuper::query::BoundQuery;
use qsuper::sqlfront::{parse, Q1_SQL, Q2_SQL};
use qsuper::superopt::features::featurize;
use qsuper::superopt::gp::{expected_improvement, median_heuristic, GaussianProcess};
use qsuper::superopt::{
    gather_experience, superoptimize_explore, superoptimize_latent, superoptimize_topk,
    BottleneckNet, ExperienceStore, ExploreConfig, FeatureConfig, LatentConfig, NetConfig,
    PlanPool,
};
use qsuper::workbench::{compare_strategies, DataSource, ExperimentConfig, QuerySource, Strategy};
use qsuper::workload::{aggregate, bucket_report, AnalyzerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn generic_answer(
    db: &Database,
    stats: &Statistics,
    sql: &str,
    params: &[Value],
) -> Result<u64, String> {
    let q = ok(ok(parse(sql))?.bind(db.schema(), params))?;
    let plan = ok(optimize(&q, stats, OptimizerConfig::default()))?.plan;
    Ok(ok(execute(db, &plan))?.answer)
}

fn bespoke_speedup() -> Check {
    let start = Instant::now();
    let db = ok(generate_movie_db(&GenConfig::default()))?;
    let report = ok(bench_compare(&db, 1000, 1))?;
    ensure(report.answers.len() == 1000, || "missing answers".into())?;
    within(start, Duration::from_secs(120))?;
    let detail = format!(
        "p50 {:.0}x, p90 {:.0}x over 1000 queries, answers equal ({:.1?})",
        report.speedup_p50,
        report.speedup_p90,
        start.elapsed()
    );
    ensure(
        report.speedup_p50 >= 5.0 && report.speedup_p90 >= 5.0,
        || detail.clone(),
    )?;
    Ok(detail)
}

/// Three-table queries: synthetic chains and movie-schema joins.
fn three_table_queries() -> Result<Vec<(Database, BoundQuery)>, String> {
    let mut out = Vec::new();
    for seed in 0..6 {
        out.push(ok(skewed_instance(seed, 3))?);
    }
    let movie = ok(generate_movie_db(&GenConfig::tiny(3)))?;
    for sql in [
        "SELECT COUNT(*) FROM Actor, Stars, Movie WHERE Actor.id = Stars.actor_id AND Stars.movie_id = Movie.id AND Movie.rating > 2",
        "SELECT COUNT(*) FROM Company, Produces, Movie WHERE Company.id = Produces.company_id AND Produces.movie_id = Movie.id AND Company.name = 'company_1'",
        "SELECT COUNT(*) FROM Stars, Produces, Movie WHERE Stars.movie_id = Movie.id AND Produces.movie_id = Movie.id AND Movie.rating = 4",
    ] {
        let q = ok(ok(parse(sql))?.bind(movie.schema(), &[]))?;
        out.push((movie.clone(), q));
    }
    Ok(out)
}

fn correctness_oracles() -> Check {
    let start = Instant::now();
    let db = ok(generate_movie_db(&GenConfig {
        seed: 11,
        n_actors: 3000,
        n_movies: 6000,
        n_companies: 60,
        ..GenConfig::default()
    }))?;
    let stats = ok(Statistics::exact(&db))?;
    let ix = ok(build_index(&db))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonzero = 0;
    for (a, c) in ok(q1_workload(&db, 100, 11))? {
        let names = [Value::Str(a.clone()), Value::Str(c.clone())];
        let want = generic_answer(&db, &stats, Q1_SQL, &names)?;
        let got = ix.q1(&a, &c);
        ensure(got == want, || {
            format!("Q1({a}, {c}) = {got}, engine {want}")
        })?;
        nonzero += usize::from(want > 0);
        let r2 = rng.random_range(1..=5);
        let r1 = rng.random_range(0..r2);
        let params = [
            names[0].clone(),
            names[1].clone(),
            Value::Int(r1),
            Value::Int(r2),
        ];
        let want = generic_answer(&db, &stats, Q2_SQL, &params)?;
        let got = ok(ix.q2(&a, &c, r1, r2))?;
        ensure(got == want, || {
            format!("Q2({a}, {c}, {r1}, {r2}) = {got}, engine {want}")
        })?;
    }

    let mut plans = 0;
    let queries = three_table_queries()?;
    for (db, q) in &queries {
        let truth = ok(true_cardinality(db, q))?;
        for p in ok(enumerate_all(q, db.schema(), EnumerateConfig::default()))? {
            let got = ok(execute(db, &p))?.answer;
            ensure(got == truth, || {
                format!("{}: {got} vs oracle {truth} for {q}", p.canonical())
            })?;
            plans += 1;
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "100 Q1/Q2 draws exact ({nonzero} non-empty); {plans} plans of {} three-table queries match the oracle",
        queries.len()
    ))
}

fn optimizer_oracle() -> Check {
    let start = Instant::now();
    let mut checked = 0;
    for seed in 0..10 {
        for n in 2..=4 {
            let (db, q) = ok(skewed_instance(seed, n))?;
            let stats = ok(Statistics::collect(&db, 0.0, seed))?;
            let est = ok(Estimator::new(&q, &stats))?;
            let min = ok(enumerate_all(&q, db.schema(), EnumerateConfig::default()))?
                .iter()
                .map(|p| cost_plan(&est, &p.root).map(|c| c.0))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| e.to_string())?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let dp = ok(optimize(&q, &stats, OptimizerConfig::exhaustive()))?.estimated_cost;
            ensure((dp - min).abs() <= 1e-9 * min.max(1.0), || {
                format!("seed {seed}, {n} tables: dp {dp} vs enumeration {min}")
            })?;
            checked += 1;
        }
    }
    let (db, q) = ok(cross_join_fixture(20_000, 10))?;
    let stats = ok(Statistics::exact(&db))?;
    let est = ok(Estimator::new(&q, &stats))?;
    let best = ok(enumerate_all(&q, db.schema(), EnumerateConfig::default()))?
        .into_iter()
        .map(|p| (cost_plan(&est, &p.root).unwrap().0, p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    let base = ok(optimize(&q, &stats, OptimizerConfig::default()))?;
    ensure(best.1.root.has_cross_join(), || {
        "fixture optimum has no cross join".into()
    })?;
    ensure(base.estimated_cost > best.0, || {
        "baseline found the optimum".into()
    })?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{checked} queries: exhaustive DP = enumeration minimum; cross-join fixture baseline {:.0} > optimum {:.0}",
        base.estimated_cost, best.0
    ))
}

fn topk_monotone() -> Check {
    let start = Instant::now();
    let mut improved = 0;
    for seed in 0..10 {
        let (db, q) = ok(skewed_instance(seed, 4))?;
        let stats = ok(Statistics::collect(&db, 2.0, seed))?;
        let mut costs = Vec::new();
        for k in [1, 2, 3, 5, 8] {
            let out = ok(superoptimize_topk(
                &db,
                &q,
                &stats,
                k,
                OptimizerConfig::default(),
                CostSource::Tuples,
                Parallelism::default(),
            ))?;
            costs.push(out.measured_cost);
        }
        ensure(costs.windows(2).all(|w| w[1] <= w[0]), || {
            format!("seed {seed}: {costs:?}")
        })?;
        improved += usize::from(costs[3] < costs[0]);
    }
    within(start, Duration::from_secs(180))?;
    let detail = format!("monotone on 10/10; k=5 beats k=1 on {improved}/10");
    ensure(improved >= 6, || detail.clone())?;
    Ok(detail)
}

/// Mean squared error of predicted `ln(1 + cost)`.
fn log_mse(net: &BottleneckNet, samples: &[(Vec<f64>, f64)]) -> f64 {
    samples
        .iter()
        .map(|(x, c)| (net.predict(x).unwrap() - c.ln_1p()).powi(2))
        .sum::<f64>()
        / samples.len() as f64
}

fn explore_never_worse_and_learning() -> Check {
    let start = Instant::now();
    for seed in 0..10 {
        let (db, q) = ok(skewed_instance(seed, 4))?;
        let stats = ok(Statistics::collect(&db, 2.0, seed))?;
        let cfg = ExploreConfig {
            seed,
            ..ExploreConfig::default()
        };
        let out = ok(superoptimize_explore(
            &db,
            &q,
            &stats,
            &cfg,
            &mut ExperienceStore::new(),
        ))?;
        ensure(out.measured_cost <= out.baseline_cost, || {
            format!(
                "seed {seed}: {} > baseline {}",
                out.measured_cost, out.baseline_cost
            )
        })?;
    }

    // Paired comparison on a held-out template: a network fitted only to the
    // template's first few runs, against one also fitted to 50 other
    // templates' experience over the same database.
    let features = FeatureConfig::default();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let db = ok(generate_synth_db(&SynthConfig {
            seed: 500 + seed,
            n_tables: 6,
            ..SynthConfig::default()
        }))?;
        let stats = ok(Statistics::collect(&db, 2.0, seed))?;
        let mut store = ExperienceStore::new();
        for t in 0..50 {
            let q = ok(random_query(&db, 4, seed * 1000 + t))?;
            ok(gather_experience(
                &db, &q, &stats, 12, 0.2, 4, t, features, &mut store,
            ))?;
        }
        let held_out = ok(random_query(&db, 4, seed * 1000 + 999))?;
        let mut own = ExperienceStore::new();
        ok(gather_experience(
            &db, &held_out, &stats, 24, 0.2, 4, 999, features, &mut own,
        ))?;
        let own = own.samples();
        let (first, eval) = own.split_at(4.min(own.len() - 1));
        let net_cfg = NetConfig {
            epochs: 150,
            seed,
            ..NetConfig::default()
        };
        let fresh = ok(BottleneckNet::train(first, net_cfg.clone()))?;
        let mut all = store.samples();
        all.extend_from_slice(first);
        let trained = ok(BottleneckNet::train(&all, net_cfg))?;
        let (e_fresh, e_trained) = (log_mse(&fresh, eval), log_mse(&trained, eval));
        wins += usize::from(e_trained < e_fresh);
        pairs.push((e_fresh, e_trained));
    }
    within(start, Duration::from_secs(300))?;
    let mean = |f: fn(&(f64, f64)) -> f64| pairs.iter().map(f).sum::<f64>() / pairs.len() as f64;
    let detail = format!(
        "never worse on 10/10 seeds; held-out log-MSE {:.3} -> {:.3}, lower on {wins}/10 seeds",
        mean(|p| p.0),
        mean(|p| p.1)
    );
    ensure(wins >= 8 && mean(|p| p.1) < mean(|p| p.0), || {
        detail.clone()
    })?;
    Ok(detail)
}

fn latent_numerics() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<(Vec<f64>, f64)> = (0..12)
        .map(|_| {
            let x: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c = (x[0] * 2.0 + x[1].abs()).exp() * 100.0;
            (x, c)
        })
        .collect();
    let mut net = ok(BottleneckNet::train(
        &samples,
        NetConfig {
            epochs: 5,
            ..NetConfig::default()
        },
    ))?;
    let batch: Vec<(Vec<f64>, f64)> = samples
        .iter()
        .map(|(x, c)| (x.clone(), c.ln_1p()))
        .collect();
    let (_, grad) = ok(net.loss_and_gradient(&batch))?;
    let params = net.params();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let i = rng.random_range(0..params.len());
        let mut p = params.clone();
        p[i] = params[i] + h;
        ok(net.set_params(&p))?;
        let up = ok(net.loss_and_gradient(&batch))?.0;
        p[i] = params[i] - h;
        ok(net.set_params(&p))?;
        let down = ok(net.loss_and_gradient(&batch))?.0;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-7));
    }
    ensure(worst < 1e-4, || {
        format!("gradient relative error {worst:e}")
    })?;

    let xs: Vec<Vec<f64>> = (0..25)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| x.iter().map(|v| v.sin()).sum::<f64>() * 3.0 + 10.0)
        .collect();
    let gp = ok(GaussianProcess::fit(&xs, &ys, median_heuristic(&xs), 1e-6))?;
    let interp = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (gp.predict(x).0 - y).abs())
        .fold(0.0, f64::max);
    ensure(interp < 1e-4, || {
        format!("GP misses an observation by {interp:e}")
    })?;
    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ei = gp.expected_improvement(&x, best, rng.random_range(0.0..0.5));
        let raw = expected_improvement(
            rng.random_range(-50.0..50.0),
            rng.random_range(0.0..20.0),
            rng.random_range(-50.0..50.0),
            0.01,
        );
        ensure(ei >= 0.0 && raw >= 0.0, || {
            format!("negative EI {ei} / {raw}")
        })?;
    }

    let (db, q) = ok(skewed_instance(5, 3))?;
    let stats = ok(Statistics::collect(&db, 2.0, 5))?;
    let est = ok(Estimator::new(&q, &stats))?;
    let plans = ok(enumerate_all(&q, db.schema(), EnumerateConfig::default()))?;
    let mut pool = ok(PlanPool::from_plans(plans, &est, FeatureConfig::default()))?;
    let training: Vec<(Vec<f64>, f64)> = pool
        .plans
        .iter()
        .zip(&pool.features)
        .take(60)
        .map(|(p, f)| (f.clone(), execute(&db, p).unwrap().tuples_processed as f64))
        .collect();
    let net = ok(BottleneckNet::train(&training, NetConfig::default()))?;
    ok(pool.attach(&net))?;
    let mut distinct = 0;
    for (i, p) in pool.plans.iter().enumerate() {
        let z = ok(net.encode(&ok(featurize(&p.root, &est, FeatureConfig::default()))?))?;
        if pool.latent.iter().filter(|l| **l == z).count() == 1 {
            let back = ok(pool.decode_index(&z))?;
            ensure(back == i, || format!("pool member {i} decodes to {back}"))?;
            distinct += 1;
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "gradient rel. error {worst:.1e}; GP interpolation {interp:.1e}; EI >= 0 on 20000 samples; \
         decode(encode) identity on {distinct}/{} pool plans",
        pool.len()
    ))
}

fn bayes_efficacy() -> Check {
    let start = Instant::now();
    let mut at_most_topk = 0;
    let mut improved = 0;
    for seed in 0..20 {
        let (db, q) = ok(skewed_instance(seed, 4))?;
        let stats = ok(Statistics::collect(&db, 2.0, seed))?;
        let cfg = LatentConfig {
            seed,
            ..LatentConfig::default()
        };
        assert_eq!(cfg.bayes.budget, 20);
        let (out, _) = ok(superoptimize_latent(&db, &q, &stats, &cfg))?;
        let bo = out.bayes.measured_cost;
        ensure(bo <= out.bayes.baseline_cost, || {
            format!("seed {seed}: {bo} > baseline {}", out.bayes.baseline_cost)
        })?;
        let topk = ok(superoptimize_topk(
            &db,
            &q,
            &stats,
            3,
            OptimizerConfig::default(),
            CostSource::Tuples,
            Parallelism::default(),
        ))?;
        at_most_topk += usize::from(bo <= topk.measured_cost);
        improved += usize::from(bo < out.bayes.baseline_cost);
    }
    within(start, Duration::from_secs(600))?;
    let detail = format!(
        "never worse on 20/20; <= topk(3) on {at_most_topk}/20; beats the baseline on {improved}/20 ({:.0?})",
        start.elapsed()
    );
    ensure(at_most_topk >= 14, || detail.clone())?;
    Ok(detail)
}

fn bucket_report_targets() -> Check {
    let start = Instant::now();
    let report = bucket_report(&aggregate(&bucket_log(1)), AnalyzerConfig::default());
    let counts: Vec<usize> = report.rows.iter().map(|r| r.template_count).collect();
    let pct: Vec<u32> = report.rows.iter().map(|r| r.pct_cluster_time).collect();
    let p50: Vec<&str> = report.rows.iter().map(|r| r.p50_display.as_str()).collect();
    ensure(counts == [52, 181, 1092, 540, 10983], || {
        format!("counts {counts:?}")
    })?;
    ensure(pct == [3, 5, 6, 19, 31], || format!("shares {pct:?}"))?;
    ensure(
        p50 == ["< 1000", "< 1000", "40900", "8700", "108600"],
        || format!("P50 {p50:?}"),
    )?;
    let total = (report.total.template_count, report.total.pct_cluster_time);
    ensure(total == (12848, 64), || format!("totals {total:?}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "counts {counts:?}, shares {pct:?}%, P50 {p50:?}, total {} / {}%",
        total.0, total.1
    ))
}

fn compare_determinism() -> Check {
    let cfg = ExperimentConfig {
        data: DataSource::Synth(SynthConfig {
            seed: 21,
            n_tables: 5,
            ..SynthConfig::default()
        }),
        queries: QuerySource::Random {
            count: 3,
            tables: 4,
        },
        strategy: Strategy::Baseline,
        error_level: 2.0,
        seed: 21,
        cost_source: CostSource::Tuples,
        experience_path: None,
        output: None,
    };
    let strategies = [
        Strategy::Topk { k: 5 },
        Strategy::Explore(ExploreConfig::default()),
        Strategy::Latent(LatentConfig::default()),
    ];
    let a = ok(compare_strategies(&cfg, &strategies))?.without_timings();
    let b = ok(compare_strategies(&cfg, &strategies))?.without_timings();
    ensure(a == b, || "matrices differ between runs".into())?;
    let bits = |r: &qsuper::workbench::CompareReport| -> Vec<u64> {
        r.measured
            .iter()
            .chain(&r.normalized)
            .flatten()
            .map(|x| x.to_bits())
            .collect()
    };
    ensure(bits(&a) == bits(&b), || "cost bits differ".into())?;
    let means: Vec<String> = a
        .strategies
        .iter()
        .zip(&a.normalized)
        .map(|(s, row)| format!("{s} {:.3}", row.iter().sum::<f64>() / row.len() as f64))
        .collect();
    Ok(format!(
        "{}x{} matrix identical across runs; mean normalized cost: {}",
        a.strategies.len(),
        a.query_lines.len(),
        means.join(", ")
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 9] = [
        ("bespoke speedup", bespoke_speedup),
        ("correctness oracles", correctness_oracles),
        ("optimizer oracle equivalence", optimizer_oracle),
        ("top-k monotonicity", topk_monotone),
        (
            "explore never worse + learning",
            explore_never_worse_and_learning,
        ),
        ("latent pipeline numerics", latent_numerics),
        ("Bayesian optimization efficacy", bayes_efficacy),
        ("workload bucket report", bucket_report_targets),
        ("compare determinism", compare_determinism),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    std::panic::set_hook(Box::new(|_| {}));
    let (mut run, mut failed) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        run += 1;
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS  {n}. {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {n}. {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} of {run} criteria pass", run - failed);
    if failed > 0 && std::env::var("QSUPER_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

//! Batch plan execution on the rayon pool versus the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qsuper::catalog::synth::skewed_instance;
use qsuper::catalog::Statistics;
use qsuper::engine::{execute_batch, ExecOptions, QueryPlan};
use qsuper::optimizer::{top_k_plans, OptimizerConfig};
use qsuper::par::Parallelism;

fn batch(c: &mut Criterion) {
    let (db, q) = skewed_instance(1, 4).unwrap();
    let stats = Statistics::collect(&db, 2.0, 1).unwrap();
    let plans: Vec<QueryPlan> = top_k_plans(&q, &stats, 16, OptimizerConfig::default())
        .unwrap()
        .into_iter()
        .map(|c| c.plan)
        .collect();
    let opts = ExecOptions::default();
    let mut group = c.benchmark_group("execute_batch_16_plans");
    group.sample_size(20);
    for mode in [Parallelism::Sequential, Parallelism::Parallel] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &m| b.iter(|| execute_batch(&db, &plans, &opts, m)),
        );
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);

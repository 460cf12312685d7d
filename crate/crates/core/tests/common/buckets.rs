//! A synthetic query log whose lifespan-bucket report matches a target
//! template table: per-bucket template counts, time shares and
//! median execution counts.

use chrono::{DateTime, Duration, TimeZone, Utc};
use qsuper::workload::LogRecord;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub struct BucketTarget {
    pub templates: usize,
    pub share: f64,
    pub median: u64,
    pub weeks: (f64, f64),
}

/// Medians shown as "< 1000" in the table are generated at 500 and 600.
pub const TARGETS: [BucketTarget; 5] = [
    BucketTarget {
        templates: 52,
        share: 0.03,
        median: 500,
        weeks: (0.0, 1.0),
    },
    BucketTarget {
        templates: 181,
        share: 0.05,
        median: 600,
        weeks: (1.0, 4.0),
    },
    BucketTarget {
        templates: 1092,
        share: 0.06,
        median: 40_900,
        weeks: (4.0, 12.0),
    },
    BucketTarget {
        templates: 540,
        share: 0.19,
        median: 8_700,
        weeks: (12.0, 24.0),
    },
    BucketTarget {
        templates: 10_983,
        share: 0.31,
        median: 108_600,
        weeks: (24.0, 52.0),
    },
];

pub const ADHOC_QUERIES: usize = 3000;
pub const TOTAL_MS: f64 = 1e9;
/// Spread of execution counts around each bucket's median (log scale).
const SIGMA: f64 = 0.35;

pub fn log_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 1, 3, 0, 0, 0).unwrap()
}

/// `n` execution counts, symmetric in log space around `median`, whose
/// median is exactly `median`.
fn execution_counts(n: usize, median: u64) -> Vec<u64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<u64> = (0..n)
        .map(|i| {
            let z = normal.inverse_cdf((i as f64 + 0.5) / n as f64);
            ((median as f64 * (SIGMA * z).exp()).round() as u64).max(2)
        })
        .collect();
    if n.is_multiple_of(2) {
        out[n / 2 - 1] = median;
        out[n / 2] = median;
    } else {
        out[n / 2] = median;
    }
    out
}

/// The fixture log in a seeded random order. Every template appears as two
/// run-length encoded records, at the start and the end of its lifespan.
pub fn bucket_log(seed: u64) -> Vec<LogRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let week = Duration::weeks(1).num_seconds() as f64;
    let year = Duration::days(364).num_seconds() as f64;
    let mut log = Vec::new();
    for (b, t) in TARGETS.iter().enumerate() {
        let mut counts = execution_counts(t.templates, t.median);
        counts.shuffle(&mut rng);
        let total: u64 = counts.iter().sum();
        let bucket_ms = t.share * TOTAL_MS;
        for (i, &e) in counts.iter().enumerate() {
            let span = rng.random_range(t.weeks.0 * week..t.weeks.1 * week - 60.0);
            let start = log_start() + Duration::seconds(rng.random_range(0.0..year - span) as i64);
            let end = start + Duration::seconds(span as i64);
            let time = bucket_ms * e as f64 / total as f64;
            let first = e / 2;
            let sql = |v: u32| {
                format!("SELECT COUNT(*) FROM report_{b}_{i} WHERE region = 'r{v}' AND day >= {v}")
            };
            log.push(LogRecord {
                timestamp: start,
                duration_ms: time * first as f64 / e as f64,
                sql: sql(rng.random_range(0..100)),
                executions: first,
            });
            log.push(LogRecord {
                timestamp: end,
                duration_ms: time * (e - first) as f64 / e as f64,
                sql: sql(rng.random_range(0..100)),
                executions: e - first,
            });
        }
    }
    let adhoc_share = 1.0 - TARGETS.iter().map(|t| t.share).sum::<f64>();
    for i in 0..ADHOC_QUERIES {
        let at = log_start() + Duration::seconds(rng.random_range(0.0..year) as i64);
        log.push(LogRecord::new(
            at,
            adhoc_share * TOTAL_MS / ADHOC_QUERIES as f64,
            format!(
                "SELECT COUNT(*) FROM scratch_{i} WHERE x < {}",
                rng.random_range(0..1000)
            ),
        ));
    }
    log.shuffle(&mut rng);
    log
}

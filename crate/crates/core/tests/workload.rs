mod common;

use chrono::{Duration, TimeZone, Utc};
use common::buckets::{bucket_log, TARGETS};
use proptest::prelude::*;
use qsuper::workload::{
    aggregate, aggregate_csv, bucket_report, write_log_csv, Aggregation, AnalyzerConfig, LogRecord,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn at(day: i64) -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 2, 9, 0, 0).unwrap() + Duration::days(day)
}

#[test]
fn empty_log_aggregates_to_nothing() {
    let agg = aggregate(&[]);
    assert!(agg.templates.is_empty());
    let report = bucket_report(&agg, AnalyzerConfig::default());
    assert_eq!(report.total.template_count, 0);
    assert!(report
        .rows
        .iter()
        .all(|r| r.template_count == 0 && r.p50_display == "-"));
}

#[test]
fn records_of_one_template_accumulate() {
    let log = [
        LogRecord::new(at(3), 10.0, "SELECT COUNT(*) FROM t WHERE a = 1"),
        LogRecord::new(at(0), 2.5, "select count(*)   from t where a = 7"),
        LogRecord::new(at(9), 0.5, "SELECT COUNT(*) FROM t WHERE a = 'x'"),
    ];
    let agg = aggregate(&log);
    assert_eq!(agg.templates.len(), 1);
    let t = agg.templates.values().next().unwrap();
    assert_eq!(t.executions, 3);
    assert_eq!(t.total_time_ms, 13.0);
    assert_eq!((t.first_seen, t.last_seen), (at(0), at(9)));
    assert_eq!(t.example, log[1].sql);
}

#[test]
fn structurally_different_queries_are_separate_templates() {
    let log = [
        LogRecord::new(at(0), 1.0, "SELECT COUNT(*) FROM t WHERE a = 1"),
        LogRecord::new(at(0), 1.0, "SELECT COUNT(*) FROM t WHERE a = 1 AND b = 1"),
    ];
    assert_eq!(aggregate(&log).templates.len(), 2);
}

#[test]
fn malformed_records_are_skipped_and_counted() {
    let mut bad = LogRecord::new(at(0), -1.0, "SELECT 1");
    let agg = aggregate(&[bad.clone(), LogRecord::new(at(0), 1.0, "SELECT 1")]);
    assert_eq!((agg.skipped, agg.templates.len()), (1, 1));
    bad.duration_ms = f64::NAN;
    assert_eq!(aggregate(&[bad]).skipped, 1);

    let csv = "timestamp,duration_ms,sql\n\
               2023-01-02T10:00:00Z,5,SELECT 1\n\
               not-a-time,5,SELECT 1\n\
               2023-01-02T10:00:00Z,abc,SELECT 1\n\
               2023-01-02 11:00:00,2.5,\"SELECT a, b FROM t\"\n\
               2023-01-03T10:00:00+02:00,1,SELECT 2,4\n\
               2023-01-03T10:00:00Z,1,SELECT 2,0\n\
               only-one-field\n";
    let agg = aggregate_csv(csv.as_bytes()).unwrap();
    assert_eq!(agg.skipped, 4);
    assert_eq!(agg.templates.len(), 2);
    assert_eq!(agg.templates.values().map(|t| t.executions).sum::<u64>(), 6);
}

#[test]
fn a_long_lived_frequent_template_lands_in_the_last_bucket() {
    let sql = "SELECT COUNT(*) FROM sales WHERE region = 'west'";
    let mut first = LogRecord::new(at(0), 100.0, sql);
    first.executions = 50_000;
    let mut last = LogRecord::new(at(30 * 7), 100.0, sql);
    last.executions = 58_600;
    let report = bucket_report(&aggregate(&[first, last]), AnalyzerConfig::default());
    assert_eq!(report.rows[4].template_count, 1);
    assert_eq!(report.rows[4].p50_executions, Some(108_600.0));
    assert_eq!(report.rows[4].p50_display, "108600");
    assert_eq!(report.rows[4].pct_cluster_time, 100);
}

#[test]
fn same_day_templates_all_land_in_the_first_bucket() {
    let mut log = Vec::new();
    for i in 0..5 {
        for h in 0..3 {
            log.push(LogRecord::new(
                at(0) + Duration::hours(h),
                1.0 + i as f64,
                format!("SELECT COUNT(*) FROM t{i} WHERE a = {h}"),
            ));
        }
    }
    let report = bucket_report(&aggregate(&log), AnalyzerConfig::default());
    assert_eq!(report.rows[0].template_count, 5);
    assert_eq!(report.rows[0].pct_cluster_time, 100);
    assert_eq!(report.rows[0].p50_display, "< 1000");
    assert!(report.rows[1..].iter().all(|r| r.template_count == 0));
    assert_eq!(report.total.pct_cluster_time, 100);
}

#[test]
fn single_executions_count_towards_time_but_not_buckets() {
    let log = [
        LogRecord::new(at(0), 30.0, "SELECT COUNT(*) FROM a"),
        LogRecord::new(at(1), 30.0, "SELECT COUNT(*) FROM a"),
        LogRecord::new(at(2), 40.0, "SELECT COUNT(*) FROM once"),
    ];
    let report = bucket_report(&aggregate(&log), AnalyzerConfig::default());
    assert_eq!(report.adhoc_templates, 1);
    assert_eq!(report.total.template_count, 1);
    assert_eq!(report.total.pct_cluster_time, 60);
    let all = bucket_report(&aggregate(&log), AnalyzerConfig { min_executions: 1 });
    assert_eq!(all.total.template_count, 2);
    assert_eq!(all.total.pct_cluster_time, 100);
}

#[test]
fn fixture_log_matches_the_target_table() {
    let report = bucket_report(&aggregate(&bucket_log(1)), AnalyzerConfig::default());
    let counts: Vec<usize> = report.rows.iter().map(|r| r.template_count).collect();
    assert_eq!(counts, vec![52, 181, 1092, 540, 10983]);
    let pct: Vec<u32> = report.rows.iter().map(|r| r.pct_cluster_time).collect();
    assert_eq!(pct, vec![3, 5, 6, 19, 31]);
    let p50: Vec<&str> = report.rows.iter().map(|r| r.p50_display.as_str()).collect();
    assert_eq!(p50, vec!["< 1000", "< 1000", "40900", "8700", "108600"]);
    assert_eq!(report.total.template_count, 12848);
    assert_eq!(report.total.pct_cluster_time, 64);
    let total_p50 = report.total.p50_executions.unwrap();
    assert!((90_000.0..=110_000.0).contains(&total_p50), "{total_p50}");
    for (row, t) in report.rows.iter().zip(&TARGETS) {
        assert!((row.share - t.share).abs() < 1e-9);
    }
    let text = report.render_table();
    assert!(text.contains("24 - 52 weeks") && text.contains("108600"));
    assert!(report
        .to_csv()
        .unwrap()
        .starts_with("duration,templates,pct_cluster_time,p50_executions\n"));
}

#[test]
fn shares_and_counts_add_up_to_the_totals_row() {
    let report = bucket_report(&aggregate(&bucket_log(2)), AnalyzerConfig::default());
    let share: f64 = report.rows.iter().map(|r| r.share).sum();
    assert!((share - report.total.share).abs() < 1e-12);
    let count: usize = report.rows.iter().map(|r| r.template_count).sum();
    assert_eq!(count, report.total.template_count);
}

#[test]
fn logs_round_trip_through_csv() {
    let log = bucket_log(3);
    let mut buf = Vec::new();
    write_log_csv(&log[..2000], &mut buf).unwrap();
    let from_csv = aggregate_csv(buf.as_slice()).unwrap();
    let direct = aggregate(&log[..2000]);
    assert_eq!(from_csv.skipped, 0);
    assert_eq!(
        bucket_report(&from_csv, AnalyzerConfig::default()),
        bucket_report(&direct, AnalyzerConfig::default())
    );
}

fn small_log() -> impl Strategy<Value = Vec<LogRecord>> {
    prop::collection::vec((0i64..400, 0u32..1000, 0usize..6, 1u64..5), 0..60).prop_map(|v| {
        v.into_iter()
            .map(|(day, ms, t, n)| LogRecord {
                timestamp: at(day),
                duration_ms: ms as f64 / 4.0,
                sql: format!("SELECT COUNT(*) FROM t{t} WHERE a = {day}"),
                executions: n,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn report_ignores_log_order(log in small_log(), seed in any::<u64>()) {
        let mut shuffled = log.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = bucket_report(&aggregate(&log), AnalyzerConfig::default());
        let b = bucket_report(&aggregate(&shuffled), AnalyzerConfig::default());
        // quarter-millisecond durations sum exactly in any order
        prop_assert_eq!(a, b);
    }

    #[test]
    fn merging_shards_equals_aggregating_the_whole(log in small_log(), cut in 0usize..60) {
        let cut = cut.min(log.len());
        let whole = aggregate(&log);
        let mut left = aggregate(&log[..cut]);
        let right = aggregate(&log[cut..]);
        let mut swapped: Aggregation = right.clone();
        swapped.merge(&left);
        left.merge(&right);
        prop_assert_eq!(&left, &whole);
        prop_assert_eq!(&swapped, &whole);
    }
}

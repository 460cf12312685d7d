//! Query-log analysis: group records by template and report template
//! lifespans, their share of cluster time and their median execution counts.
//!
//! Templates executed fewer than [`AnalyzerConfig::min_executions`] times are
//! ad-hoc queries: their time counts towards the cluster total but they are
//! not reported in any lifespan bucket.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sqlfront::templatize;

/// One log line. `executions > 1` is a run-length encoded batch of identical
/// executions; `duration_ms` is then their combined duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp: DateTime<Utc>,
    pub duration_ms: f64,
    pub sql: String,
    pub executions: u64,
}

impl LogRecord {
    pub fn new(timestamp: DateTime<Utc>, duration_ms: f64, sql: impl Into<String>) -> Self {
        LogRecord {
            timestamp,
            duration_ms,
            sql: sql.into(),
            executions: 1,
        }
    }

    fn is_valid(&self) -> bool {
        self.duration_ms.is_finite() && self.duration_ms >= 0.0 && self.executions >= 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateStats {
    pub fingerprint: u64,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
    pub executions: u64,
    pub total_time_ms: f64,
    /// The earliest record's text (smallest text on timestamp ties).
    pub example: String,
}

impl TemplateStats {
    pub fn lifespan(&self) -> chrono::Duration {
        self.last_seen - self.first_seen
    }

    fn absorb(&mut self, other: &TemplateStats) {
        if (other.first_seen, &other.example) < (self.first_seen, &self.example) {
            self.example = other.example.clone();
        }
        self.first_seen = self.first_seen.min(other.first_seen);
        self.last_seen = self.last_seen.max(other.last_seen);
        self.executions += other.executions;
        self.total_time_ms += other.total_time_ms;
    }
}

/// Per-template statistics of a log, plus what was not attributable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub templates: BTreeMap<u64, TemplateStats>,
    /// Records dropped as malformed.
    pub skipped: u64,
}

impl Aggregation {
    pub fn add(&mut self, r: &LogRecord) {
        if !r.is_valid() {
            self.skipped += 1;
            return;
        }
        let fingerprint = templatize(&r.sql).fingerprint;
        let s = TemplateStats {
            fingerprint,
            first_seen: r.timestamp,
            last_seen: r.timestamp,
            executions: r.executions,
            total_time_ms: r.duration_ms,
            example: r.sql.clone(),
        };
        match self.templates.get_mut(&fingerprint) {
            Some(t) => t.absorb(&s),
            None => {
                self.templates.insert(fingerprint, s);
            }
        }
    }

    /// Combines two aggregations, e.g. of shards of one log. Associative and
    /// commutative up to floating-point summation order.
    pub fn merge(&mut self, other: &Aggregation) {
        self.skipped += other.skipped;
        for (fp, s) in &other.templates {
            match self.templates.get_mut(fp) {
                Some(t) => t.absorb(s),
                None => {
                    self.templates.insert(*fp, s.clone());
                }
            }
        }
    }

    pub fn total_time_ms(&self) -> f64 {
        self.templates.values().map(|t| t.total_time_ms).sum()
    }
}

/// Aggregates records in one pass.
pub fn aggregate<'a>(log: impl IntoIterator<Item = &'a LogRecord>) -> Aggregation {
    let mut agg = Aggregation::default();
    for r in log {
        agg.add(r);
    }
    agg
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
                .map(|t| t.and_utc())
        })
}

fn parse_row(row: &csv::StringRecord) -> Option<LogRecord> {
    if !(3..=4).contains(&row.len()) {
        return None;
    }
    let executions = match row.get(3) {
        Some(e) => e.trim().parse().ok()?,
        None => 1,
    };
    let r = LogRecord {
        timestamp: parse_timestamp(&row[0])?,
        duration_ms: row[1].trim().parse().ok()?,
        sql: row[2].to_string(),
        executions,
    };
    r.is_valid().then_some(r)
}

/// Streams a CSV log (`timestamp, duration_ms, sql[, executions]`) into an
/// aggregation. A first row whose timestamp field reads `timestamp` is a
/// header; any other unparsable row is counted as skipped.
pub fn aggregate_csv(reader: impl Read) -> Result<Aggregation> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut agg = Aggregation::default();
    for (i, row) in rdr.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                agg.skipped += 1;
                continue;
            }
        };
        if i == 0
            && row
                .get(0)
                .is_some_and(|f| f.trim().eq_ignore_ascii_case("timestamp"))
        {
            continue;
        }
        match parse_row(&row) {
            Some(r) => agg.add(&r),
            None => agg.skipped += 1,
        }
    }
    Ok(agg)
}

/// Writes records in the format [`aggregate_csv`] reads.
pub fn write_log_csv(records: &[LogRecord], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "duration_ms", "sql", "executions"])?;
    for r in records {
        w.write_record([
            r.timestamp.to_rfc3339(),
            r.duration_ms.to_string(),
            r.sql.clone(),
            r.executions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const WEEK_SECS: i64 = 7 * 24 * 3600;

/// Lifespan bucket edges in weeks. The last bucket is open-ended.
pub const BUCKET_EDGES_WEEKS: [i64; 5] = [1, 4, 12, 24, 52];

pub const BUCKET_LABELS: [&str; 5] = [
    "< 1 week",
    "1 - 4 weeks",
    "4 - 12 weeks",
    "12 - 24 weeks",
    "24 - 52 weeks",
];

/// Bucket index of a lifespan: `[0,1)`, `[1,4)`, `[4,12)`, `[12,24)` and
/// `[24, ...)` weeks.
pub fn bucket_of(lifespan: chrono::Duration) -> usize {
    let secs = lifespan.num_seconds();
    BUCKET_EDGES_WEEKS[..4]
        .iter()
        .position(|&w| secs < w * WEEK_SECS)
        .unwrap_or(4)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    /// Templates with fewer executions are treated as ad-hoc queries.
    pub min_executions: u64,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig { min_executions: 2 }
    }
}

/// Rounds a median execution count for display: medians under 1000 show as
/// `< 1000`, everything else is rounded to the nearest hundred.
pub fn round_executions(median: f64) -> Option<u64> {
    (median >= 1000.0).then(|| ((median / 100.0).round() * 100.0) as u64)
}

pub fn display_executions(median: Option<f64>) -> String {
    match median {
        None => "-".into(),
        Some(m) => match round_executions(m) {
            Some(r) => r.to_string(),
            None => "< 1000".into(),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub template_count: usize,
    /// Share of total cluster time, as a fraction.
    pub share: f64,
    /// `share` as a whole percentage.
    pub pct_cluster_time: u32,
    /// Unrounded median executions per template; `None` for an empty bucket.
    pub p50_executions: Option<f64>,
    pub p50_display: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub rows: Vec<BucketRow>,
    pub total: BucketRow,
    /// Time of every valid record, ad-hoc queries included.
    pub total_time_ms: f64,
    pub adhoc_templates: usize,
    pub skipped_records: u64,
}

fn median(v: &mut [u64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
    })
}

fn row(bucket: &str, templates: &[&TemplateStats], total_ms: f64) -> BucketRow {
    let time: f64 = templates.iter().map(|t| t.total_time_ms).sum();
    let share = if total_ms > 0.0 { time / total_ms } else { 0.0 };
    let p50 = median(&mut templates.iter().map(|t| t.executions).collect::<Vec<_>>());
    BucketRow {
        bucket: bucket.into(),
        template_count: templates.len(),
        share,
        pct_cluster_time: (share * 100.0).round() as u32,
        p50_executions: p50,
        p50_display: display_executions(p50),
    }
}

/// Lifespan-bucket table with a totals row over the reported buckets.
pub fn bucket_report(agg: &Aggregation, cfg: AnalyzerConfig) -> BucketReport {
    let total_ms = agg.total_time_ms();
    let mut buckets: [Vec<&TemplateStats>; 5] = Default::default();
    let mut adhoc = 0;
    for t in agg.templates.values() {
        if t.executions < cfg.min_executions {
            adhoc += 1;
        } else {
            buckets[bucket_of(t.lifespan())].push(t);
        }
    }
    let rows: Vec<BucketRow> = buckets
        .iter()
        .zip(BUCKET_LABELS)
        .map(|(b, label)| row(label, b, total_ms))
        .collect();
    let all: Vec<&TemplateStats> = buckets.iter().flatten().copied().collect();
    BucketReport {
        rows,
        total: row("Total", &all, total_ms),
        total_time_ms: total_ms,
        adhoc_templates: adhoc,
        skipped_records: agg.skipped,
    }
}

impl BucketReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "duration",
            "templates",
            "pct_cluster_time",
            "p50_executions",
        ])?;
        for r in self.rows.iter().chain([&self.total]) {
            w.write_record([
                r.bucket.clone(),
                r.template_count.to_string(),
                r.pct_cluster_time.to_string(),
                r.p50_display.clone(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, a: &str, b: &str, c: &str, d: &str| {
            let _ = writeln!(s, "{a:<14} {b:>12} {c:>16} {d:>18}");
        };
        line(
            &mut s,
            "Duration",
            "# templates",
            "% cluster time",
            "P50 # executions",
        );
        for r in self.rows.iter().chain([&self.total]) {
            line(
                &mut s,
                &r.bucket,
                &r.template_count.to_string(),
                &format!("{}%", r.pct_cluster_time),
                &r.p50_display,
            );
        }
        let _ = writeln!(
            s,
            "{} ad-hoc templates excluded, {} malformed records skipped",
            self.adhoc_templates, self.skipped_records
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_edges_are_half_open() {
        let w = |n: i64| chrono::Duration::seconds(n * WEEK_SECS);
        assert_eq!(bucket_of(chrono::Duration::zero()), 0);
        assert_eq!(bucket_of(w(1) - chrono::Duration::seconds(1)), 0);
        assert_eq!(bucket_of(w(1)), 1);
        assert_eq!(bucket_of(w(4)), 2);
        assert_eq!(bucket_of(w(12)), 3);
        assert_eq!(bucket_of(w(24)), 4);
        assert_eq!(bucket_of(w(60)), 4);
    }

    #[test]
    fn execution_counts_round_like_the_target_table() {
        assert_eq!(round_executions(108_600.0), Some(108_600));
        assert_eq!(round_executions(40_949.0), Some(40_900));
        assert_eq!(round_executions(8_650.0), Some(8_700));
        assert_eq!(round_executions(999.5), None);
        assert_eq!(display_executions(Some(12.0)), "< 1000");
        assert_eq!(display_executions(None), "-");
    }

    #[test]
    fn even_medians_average_the_middle_pair() {
        assert_eq!(median(&mut [4, 1, 3, 2]), Some(2.5));
        assert_eq!(median(&mut [5]), Some(5.0));
        assert_eq!(median(&mut []), None);
    }
}

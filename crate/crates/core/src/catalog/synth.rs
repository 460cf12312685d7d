//! Seeded synthetic schemas and queries for optimizer experiments.
//!
//! A synthetic database is a random foreign-key tree over tables `t0..tN`:
//! every table but `t0` references a parent through a column named after it
//! (`t3.t1_id -> t1.id`). References are Zipf-skewed towards low parent ids
//! and each table's `a` column is the id's percentile bucket, so filters on
//! `a` correlate with join fan-out. That correlation is invisible to
//! ndv/min/max statistics, which is what makes plan choice hard.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::gen::table_rng;
use super::{mix64, ColumnData, DataType, Database, Table, TableDef, Value};
use crate::error::{Error, Result};
use crate::query::{BoundQuery, CmpOp, ColumnRef, JoinEdge, Predicate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_tables: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Zipf exponent of foreign-key popularity.
    pub skew: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_tables: 4,
            min_rows: 200,
            max_rows: 20_000,
            skew: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::query::MAX_QUERY_TABLES).contains(&self.n_tables) {
            return Err(Error::config("n_tables", "must be between 2 and 16"));
        }
        if self.min_rows == 0 || self.min_rows > self.max_rows {
            return Err(Error::config("min_rows", "must be >= 1 and <= max_rows"));
        }
        if self.max_rows > u32::MAX as usize {
            return Err(Error::config("max_rows", "row ids must fit in 32 bits"));
        }
        if !(self.skew.is_finite() && self.skew >= 0.0) {
            return Err(Error::config("skew", "must be a finite value >= 0"));
        }
        Ok(())
    }
}

/// Number of distinct values of each table's `a` column.
pub const A_BUCKETS: i64 = 100;
/// Number of distinct values of each table's `b` column.
pub const B_VALUES: i64 = 10;

pub fn table_name(i: usize) -> String {
    format!("t{i}")
}

/// Parent of each table in the foreign-key tree (`None` for `t0`).
pub fn fk_parents(db: &Database) -> Vec<Option<usize>> {
    db.tables()
        .iter()
        .map(|t| {
            t.def
                .columns
                .iter()
                .find_map(|c| c.name.strip_prefix('t')?.strip_suffix("_id")?.parse().ok())
        })
        .collect()
}

pub fn generate_synth_db(cfg: &SynthConfig) -> Result<Database> {
    cfg.validate()?;
    let mut shape = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0x5eed_7ab1e5));
    let (lo, hi) = ((cfg.min_rows as f64).ln(), (cfg.max_rows as f64).ln());
    let rows: Vec<usize> = (0..cfg.n_tables)
        .map(|_| {
            let r = if hi > lo {
                shape.random_range(lo..=hi)
            } else {
                lo
            };
            (r.exp().round() as usize).clamp(cfg.min_rows, cfg.max_rows)
        })
        .collect();
    let parents: Vec<Option<usize>> = (0..cfg.n_tables)
        .map(|i| (i > 0).then(|| shape.random_range(0..i)))
        .collect();

    let mut tables = Vec::with_capacity(cfg.n_tables);
    for i in 0..cfg.n_tables {
        let name = table_name(i);
        let n = rows[i];
        let mut rng = table_rng(cfg.seed, &name);
        let ids: Vec<i64> = (0..n as i64).collect();
        let a: Vec<i64> = (0..n as i64).map(|id| id * A_BUCKETS / n as i64).collect();
        let b: Vec<i64> = (0..n).map(|_| rng.random_range(0..B_VALUES)).collect();
        let mut cols = vec![
            ("id".to_string(), DataType::Int64),
            ("a".into(), DataType::Int64),
            ("b".into(), DataType::Int64),
        ];
        let mut data = vec![
            ColumnData::Int64(ids),
            ColumnData::Int64(a),
            ColumnData::Int64(b),
        ];
        let mut indexes = vec!["id".to_string(), "a".into()];
        if let Some(p) = parents[i] {
            let zipf = Zipf::new(rows[p] as f64, cfg.skew)
                .map_err(|e| Error::config("skew", e.to_string()))?;
            let fk: Vec<i64> = (0..n).map(|_| zipf.sample(&mut rng) as i64 - 1).collect();
            let col = format!("{}_id", table_name(p));
            cols.push((col.clone(), DataType::Int64));
            data.push(ColumnData::Int64(fk));
            indexes.push(col);
        }
        let col_refs: Vec<(&str, DataType)> = cols.iter().map(|(c, t)| (c.as_str(), *t)).collect();
        let ix_refs: Vec<&str> = indexes.iter().map(String::as_str).collect();
        tables.push(Table::new(
            TableDef::new(&name, &col_refs, "id", &ix_refs),
            data,
        )?);
    }
    Database::new(tables, cfg.seed)
}

/// A random connected query over `n_tables` tables of a synthetic database,
/// joined along the foreign-key tree, with random filters. Pure function of
/// `(db, n_tables, seed)`.
pub fn random_query(db: &Database, n_tables: usize, seed: u64) -> Result<BoundQuery> {
    let total = db.tables().len();
    if n_tables == 0 || n_tables > total {
        return Err(Error::Argument(format!(
            "cannot pick {n_tables} of {total} tables"
        )));
    }
    let parents = fk_parents(db);
    let neighbors = |i: usize| -> Vec<usize> {
        (0..total)
            .filter(|&j| parents[j] == Some(i) || parents[i] == Some(j))
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x9e37_79b9));
    let mut chosen = vec![rng.random_range(0..total)];
    while chosen.len() < n_tables {
        let mut frontier: Vec<usize> = chosen
            .iter()
            .flat_map(|&i| neighbors(i))
            .filter(|j| !chosen.contains(j))
            .collect();
        frontier.sort_unstable();
        frontier.dedup();
        chosen.push(frontier[rng.random_range(0..frontier.len())]);
    }
    chosen.sort_unstable();

    let tables: Vec<String> = chosen.iter().map(|&i| table_name(i)).collect();
    let mut joins = Vec::new();
    for &i in &chosen {
        if let Some(p) = parents[i].filter(|p| chosen.contains(p)) {
            joins.push(JoinEdge::new(
                ColumnRef::new(&table_name(i), &format!("{}_id", table_name(p))),
                ColumnRef::new(&table_name(p), "id"),
            ));
        }
    }
    let mut filters = Vec::new();
    for t in &tables {
        match rng.random_range(0..4) {
            0 => filters.push(Predicate {
                column: ColumnRef::new(t, "a"),
                op: CmpOp::Eq,
                value: Value::Int(rng.random_range(0..A_BUCKETS)),
            }),
            1 => filters.push(Predicate {
                column: ColumnRef::new(t, "a"),
                op: CmpOp::Lt,
                value: Value::Int(rng.random_range(1..A_BUCKETS)),
            }),
            2 => filters.push(Predicate {
                column: ColumnRef::new(t, "b"),
                op: CmpOp::Eq,
                value: Value::Int(rng.random_range(0..B_VALUES)),
            }),
            _ => {}
        }
    }
    BoundQuery::new(db.schema(), tables, joins, filters)
}

/// Seeded skewed database of `n_tables` tables with a query touching all of them.
pub fn skewed_instance(seed: u64, n_tables: usize) -> Result<(Database, BoundQuery)> {
    let db = generate_synth_db(&SynthConfig {
        seed,
        n_tables,
        ..SynthConfig::default()
    })?;
    let q = random_query(&db, n_tables, seed)?;
    Ok((db, q))
}

/// A large fact table referencing two tiny dimension tables, each filtered to
/// a single row. Joining the two dimensions first (a cross join of 1×1 rows)
/// is optimal, but cross-join-free planners must join the fact table first.
pub fn cross_join_fixture(fact_rows: usize, dim_rows: usize) -> Result<(Database, BoundQuery)> {
    if fact_rows == 0 || dim_rows == 0 {
        return Err(Error::Argument("fixture sizes must be positive".into()));
    }
    let dim = |name: &str| {
        Table::new(
            TableDef::new(
                name,
                &[("id", DataType::Int64), ("a", DataType::Int64)],
                "id",
                &["id"],
            ),
            vec![
                ColumnData::Int64((0..dim_rows as i64).collect()),
                ColumnData::Int64((0..dim_rows as i64).collect()),
            ],
        )
    };
    let fact = Table::new(
        TableDef::new(
            "fact",
            &[
                ("id", DataType::Int64),
                ("d1_id", DataType::Int64),
                ("d2_id", DataType::Int64),
            ],
            "id",
            &["id"],
        ),
        vec![
            ColumnData::Int64((0..fact_rows as i64).collect()),
            ColumnData::Int64((0..fact_rows as i64).map(|i| i % dim_rows as i64).collect()),
            ColumnData::Int64(
                (0..fact_rows as i64)
                    .map(|i| (i / dim_rows as i64) % dim_rows as i64)
                    .collect(),
            ),
        ],
    )?;
    let db = Database::new(vec![fact, dim("dim1")?, dim("dim2")?], 0)?;
    let q = BoundQuery::new(
        db.schema(),
        vec!["fact".into(), "dim1".into(), "dim2".into()],
        vec![
            JoinEdge::new(
                ColumnRef::new("fact", "d1_id"),
                ColumnRef::new("dim1", "id"),
            ),
            JoinEdge::new(
                ColumnRef::new("fact", "d2_id"),
                ColumnRef::new("dim2", "id"),
            ),
        ],
        vec![
            Predicate {
                column: ColumnRef::new("dim1", "a"),
                op: CmpOp::Eq,
                value: Value::Int(0),
            },
            Predicate {
                column: ColumnRef::new("dim2", "a"),
                op: CmpOp::Eq,
                value: Value::Int(0),
            },
        ],
    )?;
    Ok((db, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::true_cardinality;

    #[test]
    fn generation_is_deterministic_and_keys_are_valid() {
        let cfg = SynthConfig {
            seed: 3,
            n_tables: 5,
            ..SynthConfig::default()
        };
        let a = generate_synth_db(&cfg).unwrap();
        let b = generate_synth_db(&cfg).unwrap();
        for (x, y) in a.tables().iter().zip(b.tables()) {
            assert_eq!(x.columns(), y.columns());
        }
        let parents = fk_parents(&a);
        assert_eq!(parents[0], None);
        for (i, p) in parents.iter().enumerate().skip(1) {
            let p = p.expect("every table but t0 has a parent");
            assert!(p < i);
            let n = a.tables()[p].row_count() as i64;
            let fk = a.tables()[i]
                .column(&format!("t{p}_id"))
                .unwrap()
                .as_i64()
                .unwrap();
            assert!(fk.iter().all(|&v| (0..n).contains(&v)));
        }
    }

    #[test]
    fn random_queries_are_connected() {
        let (db, _) = skewed_instance(1, 6).unwrap();
        for seed in 0..20 {
            let q = random_query(&db, 4, seed).unwrap();
            assert_eq!(q.tables.len(), 4);
            assert_eq!(q.joins.len(), 3);
            assert!(q.is_connected(q.all_tables()));
        }
    }

    #[test]
    fn cross_join_fixture_counts() {
        let (db, q) = cross_join_fixture(200, 10).unwrap();
        // one dimension pair selected; 200 fact rows spread over 100 pairs
        assert_eq!(true_cardinality(&db, &q).unwrap(), 2);
    }
}

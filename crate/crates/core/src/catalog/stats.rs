//! Per-column statistics with controllable, seeded estimation error.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{fnv1a, mix64, ColumnData, Database, Table, Value};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    /// Number of distinct values, possibly perturbed. Always in `[1, max(row_count, 1)]`.
    pub ndv: u64,
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub row_count: u64,
    pub noise_seed: u64,
}

fn exact_ndv(col: &ColumnData) -> u64 {
    match col {
        ColumnData::Int64(v) => v.iter().collect::<HashSet<_>>().len() as u64,
        ColumnData::Float64(v) => {
            v.iter().map(|x| x.to_bits()).collect::<HashSet<_>>().len() as u64
        }
        // the dictionary is built from the column's own values
        ColumnData::Utf8 { dict, .. } => dict.len() as u64,
    }
}

fn bounds(col: &ColumnData) -> (Option<Value>, Option<Value>) {
    match col {
        ColumnData::Int64(v) => (
            v.iter().min().copied().map(Value::Int),
            v.iter().max().copied().map(Value::Int),
        ),
        ColumnData::Float64(v) => (
            v.iter().copied().min_by(f64::total_cmp).map(Value::Float),
            v.iter().copied().max_by(f64::total_cmp).map(Value::Float),
        ),
        ColumnData::Utf8 { dict, .. } => (
            dict.first().cloned().map(Value::Str),
            dict.last().cloned().map(Value::Str),
        ),
    }
}

fn noise_seed(seed: u64, table: &str, column: &str) -> u64 {
    mix64(seed ^ fnv1a(&[table.as_bytes(), column.as_bytes()]))
}

fn stats_for(table: &Table, column: &str, error_level: f64, seed: u64) -> Result<ColumnStats> {
    let col = table.column(column)?;
    let row_count = table.row_count() as u64;
    let nseed = noise_seed(seed, table.name(), column);
    let mut ndv = exact_ndv(col).max(1);
    if error_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(nseed);
        let z: f64 = rng.sample(StandardNormal);
        let perturbed = (ndv as f64 * (error_level * z).exp()).round();
        ndv = perturbed.clamp(1.0, row_count.max(1) as f64) as u64;
    }
    let (min, max) = bounds(col);
    Ok(ColumnStats {
        ndv,
        min,
        max,
        row_count,
        noise_seed: nseed,
    })
}

/// Statistics for one column. `error_level` is the sigma of a multiplicative
/// lognormal perturbation of ndv; 0 gives exact statistics. Deterministic per
/// `(seed, table, column)`.
pub fn column_stats(
    db: &Database,
    table: &str,
    column: &str,
    error_level: f64,
    seed: u64,
) -> Result<ColumnStats> {
    if !(error_level.is_finite() && error_level >= 0.0) {
        return Err(Error::Argument(format!(
            "error level {error_level} must be >= 0"
        )));
    }
    stats_for(db.table(table)?, column, error_level, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub row_count: u64,
    pub columns: BTreeMap<String, ColumnStats>,
    pub indexes: Vec<String>,
}

/// Everything the optimizer knows about a database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub error_level: f64,
    pub seed: u64,
    pub tables: BTreeMap<String, TableStats>,
}

impl Statistics {
    pub fn collect(db: &Database, error_level: f64, seed: u64) -> Result<Self> {
        if !(error_level.is_finite() && error_level >= 0.0) {
            return Err(Error::Argument(format!(
                "error level {error_level} must be >= 0"
            )));
        }
        let mut tables = BTreeMap::new();
        for t in db.tables() {
            let mut columns = BTreeMap::new();
            for c in &t.def.columns {
                columns.insert(c.name.clone(), stats_for(t, &c.name, error_level, seed)?);
            }
            tables.insert(
                t.name().to_string(),
                TableStats {
                    row_count: t.row_count() as u64,
                    columns,
                    indexes: t.def.indexes.iter().cloned().collect(),
                },
            );
        }
        Ok(Statistics {
            error_level,
            seed,
            tables,
        })
    }

    /// Exact statistics, seeded from the database itself.
    pub fn exact(db: &Database) -> Result<Self> {
        Self::collect(db, 0.0, db.seed)
    }

    pub fn table(&self, name: &str) -> Result<&TableStats> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::Estimation(format!("no statistics for table {name}")))
    }

    pub fn column(&self, table: &str, column: &str) -> Result<&ColumnStats> {
        self.table(table)?
            .columns
            .get(column)
            .ok_or_else(|| Error::Estimation(format!("no statistics for column {table}.{column}")))
    }

    pub fn has_index(&self, table: &str, column: &str) -> bool {
        self.tables
            .get(table)
            .is_some_and(|t| t.indexes.iter().any(|c| c == column))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{DataType, TableDef};
    use proptest::prelude::*;

    fn db_with(values: Vec<i64>) -> Database {
        let n = values.len() as i64;
        let t = Table::new(
            TableDef::new(
                "T",
                &[("id", DataType::Int64), ("v", DataType::Int64)],
                "id",
                &[],
            ),
            vec![
                ColumnData::Int64((0..n).collect()),
                ColumnData::Int64(values),
            ],
        )
        .unwrap();
        Database::new(vec![t], 11).unwrap()
    }

    #[test]
    fn exact_stats_on_small_column() {
        let db = db_with(vec![1, 1, 2]);
        let s = column_stats(&db, "T", "v", 0.0, 1).unwrap();
        assert_eq!(s.ndv, 2);
        assert_eq!(s.min, Some(Value::Int(1)));
        assert_eq!(s.max, Some(Value::Int(2)));
        assert_eq!(s.row_count, 3);
        assert_eq!(s, column_stats(&db, "T", "v", 0.0, 1).unwrap());
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let db = db_with(vec![1]);
        assert!(matches!(
            column_stats(&db, "T", "zz", 0.0, 1),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            column_stats(&db, "Q", "v", 0.0, 1),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let db = db_with((0..500).collect());
        let a = column_stats(&db, "T", "v", 1.0, 42).unwrap();
        let b = column_stats(&db, "T", "v", 1.0, 42).unwrap();
        assert_eq!(a, b);
        let differs = (0..20).any(|s| column_stats(&db, "T", "v", 1.0, s).unwrap().ndv != a.ndv);
        assert!(differs);
    }

    #[test]
    fn perturbed_ndv_stays_in_range_over_1000_seeds() {
        let db = db_with((0..200).map(|i| i % 37).collect());
        for seed in 0..1000 {
            let s = column_stats(&db, "T", "v", 2.0, seed).unwrap();
            assert!((1..=200).contains(&s.ndv), "seed {seed}: {}", s.ndv);
        }
    }

    proptest! {
        #[test]
        fn ndv_bounded_for_any_error_level(level in 0.0f64..5.0, seed in any::<u64>(), n in 1usize..60) {
            let db = db_with((0..n as i64).map(|i| i % 7).collect());
            let s = column_stats(&db, "T", "v", level, seed).unwrap();
            prop_assert!(s.ndv >= 1 && s.ndv <= n as u64);
        }
    }
}

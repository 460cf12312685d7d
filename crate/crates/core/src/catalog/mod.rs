//! Schemas, in-memory columnar tables and the databases the engine runs on.
//!
//! Tables are immutable once built. String columns are dictionary encoded
//! with a sorted dictionary, so code order equals string order and every
//! string predicate can be evaluated on codes.

mod gen;
mod oracle;
mod stats;
mod storage;
pub mod synth;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::CmpOp;

pub use gen::{generate_movie_db, GenConfig};
pub use oracle::{sample_mask, true_cardinality, true_cardinality_sampled};
pub use stats::{column_stats, ColumnStats, Statistics, TableStats};
pub use storage::{load_database, save_database};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Int64,
    Float64,
    String,
}

/// A typed scalar, used for literals, statistics bounds and the naive oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Int(_) => DataType::Int64,
            Value::Float(_) => DataType::Float64,
            Value::Str(_) => DataType::String,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Str(_) => None,
        }
    }

    /// Total order within numeric values and within strings; `None` across kinds.
    pub fn partial_compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Str(_), _) | (_, Value::Str(_)) => None,
            (a, b) => Some(a.as_f64()?.total_cmp(&b.as_f64()?)),
        }
    }

    /// Evaluates `self <op> rhs`. Mismatched kinds never match.
    pub fn satisfies(&self, op: CmpOp, rhs: &Value) -> bool {
        self.partial_compare(rhs).is_some_and(|ord| op.holds(ord))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => {
                if v.fract() == 0.0 && v.is_finite() {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
            Value::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub dtype: DataType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub primary_key: String,
    #[serde(default)]
    pub indexes: BTreeSet<String>,
}

impl TableDef {
    pub fn new(
        name: &str,
        columns: &[(&str, DataType)],
        primary_key: &str,
        indexes: &[&str],
    ) -> Self {
        TableDef {
            name: name.to_string(),
            columns: columns
                .iter()
                .map(|(n, t)| ColumnDef {
                    name: n.to_string(),
                    dtype: *t,
                })
                .collect(),
            primary_key: primary_key.to_string(),
            indexes: indexes.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn has_index(&self, column: &str) -> bool {
        self.indexes.contains(column)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableDef>,
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for t in &self.tables {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Schema(format!("duplicate table {}", t.name)));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate column {}.{}",
                        t.name, c.name
                    )));
                }
            }
            if t.column(&t.primary_key).is_none() {
                return Err(Error::Schema(format!(
                    "primary key {}.{} is not a column",
                    t.name, t.primary_key
                )));
            }
            for ix in &t.indexes {
                match t.column(ix) {
                    None => {
                        return Err(Error::Schema(format!(
                            "index on unknown column {}.{}",
                            t.name, ix
                        )))
                    }
                    Some(c) if c.dtype == DataType::Float64 => {
                        return Err(Error::Schema(format!(
                            "index on float column {}.{}",
                            t.name, ix
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Typed column storage.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    /// Sorted, deduplicated dictionary plus one code per row.
    Utf8 {
        dict: Vec<String>,
        codes: Vec<u32>,
    },
}

impl ColumnData {
    pub fn from_strings<S: AsRef<str>>(values: &[S]) -> Self {
        let mut dict: Vec<String> = values.iter().map(|s| s.as_ref().to_string()).collect();
        dict.sort_unstable();
        dict.dedup();
        let codes = values
            .iter()
            .map(|s| {
                dict.binary_search_by(|d| d.as_str().cmp(s.as_ref()))
                    .unwrap() as u32
            })
            .collect();
        ColumnData::Utf8 { dict, codes }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Utf8 { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data_type(&self) -> DataType {
        match self {
            ColumnData::Int64(_) => DataType::Int64,
            ColumnData::Float64(_) => DataType::Float64,
            ColumnData::Utf8 { .. } => DataType::String,
        }
    }

    pub fn value(&self, row: usize) -> Value {
        match self {
            ColumnData::Int64(v) => Value::Int(v[row]),
            ColumnData::Float64(v) => Value::Float(v[row]),
            ColumnData::Utf8 { dict, codes } => Value::Str(dict[codes[row] as usize].clone()),
        }
    }

    /// Integer key used for joins and index lookups (dictionary code for strings).
    #[inline]
    pub fn key(&self, row: usize) -> Option<i64> {
        match self {
            ColumnData::Int64(v) => Some(v[row]),
            ColumnData::Utf8 { codes, .. } => Some(codes[row] as i64),
            ColumnData::Float64(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match self {
            ColumnData::Int64(v) => Some(v),
            _ => None,
        }
    }

    /// Compiles `column <op> literal` into a test over raw storage.
    pub fn compile(&self, op: CmpOp, literal: &Value) -> Result<CompiledTest> {
        Ok(match (self, literal) {
            (ColumnData::Int64(_), Value::Int(v)) => CompiledTest::Int(op, *v),
            (ColumnData::Int64(_), Value::Float(v)) | (ColumnData::Float64(_), Value::Float(v)) => {
                CompiledTest::Float(op, *v)
            }
            (ColumnData::Float64(_), Value::Int(v)) => CompiledTest::Float(op, *v as f64),
            (ColumnData::Utf8 { dict, .. }, Value::Str(s)) => {
                let lower = dict.partition_point(|d| d.as_str() < s.as_str()) as i64;
                let upper = dict.partition_point(|d| d.as_str() <= s.as_str()) as i64;
                match op {
                    CmpOp::Eq if lower == upper => CompiledTest::Never,
                    CmpOp::Eq => CompiledTest::Int(CmpOp::Eq, lower),
                    CmpOp::Lt => CompiledTest::Int(CmpOp::Lt, lower),
                    CmpOp::Le => CompiledTest::Int(CmpOp::Lt, upper),
                    CmpOp::Gt => CompiledTest::Int(CmpOp::Ge, upper),
                    CmpOp::Ge => CompiledTest::Int(CmpOp::Ge, lower),
                }
            }
            (col, lit) => {
                return Err(Error::Schema(format!(
                    "cannot compare {:?} column with {:?} literal",
                    col.data_type(),
                    lit.data_type()
                )))
            }
        })
    }

    #[inline]
    pub fn test(&self, row: usize, test: &CompiledTest) -> bool {
        match (self, test) {
            (_, CompiledTest::Never) => false,
            (ColumnData::Int64(v), CompiledTest::Int(op, x)) => op.holds(v[row].cmp(x)),
            (ColumnData::Utf8 { codes, .. }, CompiledTest::Int(op, x)) => {
                op.holds((codes[row] as i64).cmp(x))
            }
            (ColumnData::Int64(v), CompiledTest::Float(op, x)) => {
                op.holds((v[row] as f64).total_cmp(x))
            }
            (ColumnData::Float64(v), CompiledTest::Float(op, x)) => op.holds(v[row].total_cmp(x)),
            _ => false,
        }
    }
}

/// A predicate lowered onto a column's physical representation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompiledTest {
    Int(CmpOp, i64),
    Float(CmpOp, f64),
    Never,
}

impl CompiledTest {
    /// The index key an equality test probes, if any.
    pub fn eq_key(&self) -> Option<Option<i64>> {
        match self {
            CompiledTest::Int(CmpOp::Eq, k) => Some(Some(*k)),
            CompiledTest::Never => Some(None),
            _ => None,
        }
    }
}

/// Hash index from key to row ids, ascending.
pub type HashIndex = HashMap<i64, Vec<u32>>;

#[derive(Clone, Debug)]
pub struct Table {
    pub def: TableDef,
    columns: Vec<ColumnData>,
    indexes: HashMap<usize, HashIndex>,
    row_count: usize,
}

impl Table {
    /// Builds a table, checking column lengths, types and primary-key uniqueness,
    /// and materializes every declared index.
    pub fn new(def: TableDef, columns: Vec<ColumnData>) -> Result<Self> {
        if columns.len() != def.columns.len() {
            return Err(Error::Schema(format!(
                "table {} declares {} columns but {} were supplied",
                def.name,
                def.columns.len(),
                columns.len()
            )));
        }
        let row_count = columns.first().map_or(0, ColumnData::len);
        for (c, data) in def.columns.iter().zip(&columns) {
            if data.len() != row_count {
                return Err(Error::Schema(format!(
                    "column {}.{} has {} rows, expected {}",
                    def.name,
                    c.name,
                    data.len(),
                    row_count
                )));
            }
            if data.data_type() != c.dtype {
                return Err(Error::Schema(format!(
                    "column {}.{} holds {:?}, declared {:?}",
                    def.name,
                    c.name,
                    data.data_type(),
                    c.dtype
                )));
            }
        }
        let pk = def
            .column_index(&def.primary_key)
            .ok_or_else(|| Error::Schema(format!("missing primary key on {}", def.name)))?;
        let mut seen = HashSet::with_capacity(row_count);
        for r in 0..row_count {
            let distinct = match &columns[pk] {
                ColumnData::Float64(v) => seen.insert(v[r].to_bits() as i64),
                c => seen.insert(c.key(r).unwrap()),
            };
            if !distinct {
                return Err(Error::Schema(format!(
                    "duplicate primary key {} in {}",
                    columns[pk].value(r),
                    def.name
                )));
            }
        }
        let mut indexes = HashMap::new();
        for ix in &def.indexes {
            let ci = def.column_index(ix).ok_or_else(|| {
                Error::Schema(format!("index on unknown column {}.{}", def.name, ix))
            })?;
            let mut index: HashIndex = HashMap::new();
            for r in 0..row_count {
                let key = columns[ci].key(r).ok_or_else(|| {
                    Error::Schema(format!("cannot index float column {}.{}", def.name, ix))
                })?;
                index.entry(key).or_default().push(r as u32);
            }
            indexes.insert(ci, index);
        }
        Ok(Table {
            def,
            columns,
            indexes,
            row_count,
        })
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, name: &str) -> Result<&ColumnData> {
        self.def
            .column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::Schema(format!("unknown column {}.{}", self.def.name, name)))
    }

    pub fn column_at(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn index(&self, column: &str) -> Option<&HashIndex> {
        self.def
            .column_index(column)
            .and_then(|i| self.indexes.get(&i))
    }
}

/// A schema plus its tables. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Database {
    schema: Schema,
    tables: Vec<Table>,
    /// Seed the data was generated from; also seeds statistics noise.
    pub seed: u64,
}

impl Database {
    pub fn new(tables: Vec<Table>, seed: u64) -> Result<Self> {
        let schema = Schema {
            tables: tables.iter().map(|t| t.def.clone()).collect(),
        };
        schema.validate()?;
        Ok(Database {
            schema,
            tables,
            seed,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .iter()
            .find(|t| t.def.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown table {name}")))
    }
}

/// FNV-1a over a byte stream; stable across platforms and releases.
pub(crate) fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer, used to turn structured seeds into well-mixed ones.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

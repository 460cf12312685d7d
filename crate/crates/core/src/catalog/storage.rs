//! On-disk database format: a directory holding `schema.json` and one
//! `<table>.<column>.col` file per column.
//!
//! Column file layout (little endian):
//!
//! ```text
//! magic   b"QSC1"
//! type    u8      0 = int64, 1 = float64, 2 = string
//! count   u64     number of rows
//! payload         int64/float64: `count` 8-byte values
//!                 string: `count` entries of (u32 byte length, utf-8 bytes)
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColumnData, DataType, Database, Table, TableDef};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"QSC1";
const MANIFEST: &str = "schema.json";
const FORMAT: &str = "qsuper-columns-v1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    seed: u64,
    tables: Vec<ManifestTable>,
}

#[derive(Serialize, Deserialize)]
struct ManifestTable {
    #[serde(flatten)]
    def: TableDef,
    row_count: usize,
}

fn column_file(table: &str, column: &str) -> String {
    format!("{table}.{column}.col")
}

fn write_column(path: &Path, col: &ColumnData) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    let tag = match col.data_type() {
        DataType::Int64 => 0u8,
        DataType::Float64 => 1,
        DataType::String => 2,
    };
    w.write_all(&[tag])?;
    w.write_all(&(col.len() as u64).to_le_bytes())?;
    match col {
        ColumnData::Int64(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        ColumnData::Float64(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        ColumnData::Utf8 { dict, codes } => {
            for &c in codes {
                let s = dict[c as usize].as_bytes();
                w.write_all(&(s.len() as u32).to_le_bytes())?;
                w.write_all(s)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_column(path: &Path, expected: DataType) -> Result<ColumnData> {
    let mut r = BufReader::new(fs::File::open(path)?);
    if &read_exact::<4>(&mut r)? != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a column file",
            path.display()
        )));
    }
    let dtype = match read_exact::<1>(&mut r)?[0] {
        0 => DataType::Int64,
        1 => DataType::Float64,
        2 => DataType::String,
        t => {
            return Err(Error::Data(format!(
                "{}: unknown type tag {t}",
                path.display()
            )))
        }
    };
    if dtype != expected {
        return Err(Error::Data(format!(
            "{}: holds {dtype:?}, manifest declares {expected:?}",
            path.display()
        )));
    }
    let n = u64::from_le_bytes(read_exact::<8>(&mut r)?) as usize;
    Ok(match dtype {
        DataType::Int64 => ColumnData::Int64(
            (0..n)
                .map(|_| read_exact::<8>(&mut r).map(i64::from_le_bytes))
                .collect::<Result<_>>()?,
        ),
        DataType::Float64 => ColumnData::Float64(
            (0..n)
                .map(|_| read_exact::<8>(&mut r).map(f64::from_le_bytes))
                .collect::<Result<_>>()?,
        ),
        DataType::String => {
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                let len = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)?;
                values.push(
                    String::from_utf8(buf)
                        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?,
                );
            }
            ColumnData::from_strings(&values)
        }
    })
}

pub fn save_database(db: &Database, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format: FORMAT.to_string(),
        seed: db.seed,
        tables: db
            .tables()
            .iter()
            .map(|t| ManifestTable {
                def: t.def.clone(),
                row_count: t.row_count(),
            })
            .collect(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    for t in db.tables() {
        for (def, col) in t.def.columns.iter().zip(t.columns()) {
            write_column(&dir.join(column_file(t.name(), &def.name)), col)?;
        }
    }
    Ok(())
}

pub fn load_database(dir: &Path) -> Result<Database> {
    let path = dir.join(MANIFEST);
    let bytes =
        fs::read(&path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)?;
    if manifest.format != FORMAT {
        return Err(Error::Data(format!(
            "unsupported database format {}",
            manifest.format
        )));
    }
    let mut tables = Vec::with_capacity(manifest.tables.len());
    for mt in manifest.tables {
        let mut cols = Vec::with_capacity(mt.def.columns.len());
        for c in &mt.def.columns {
            let col = read_column(&dir.join(column_file(&mt.def.name, &c.name)), c.dtype)?;
            if col.len() != mt.row_count {
                return Err(Error::Data(format!(
                    "{}.{} has {} rows, manifest says {}",
                    mt.def.name,
                    c.name,
                    col.len(),
                    mt.row_count
                )));
            }
            cols.push(col);
        }
        tables.push(Table::new(mt.def, cols)?);
    }
    Database::new(tables, manifest.seed)
}

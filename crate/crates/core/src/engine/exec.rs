//! Plan execution with deterministic work accounting.
//!
//! Work (`tuples_processed`) is the sum over operators of input tuples
//! consumed plus output tuples produced:
//!
//! | operator      | input charge                                   |
//! |---------------|------------------------------------------------|
//! | full scan     | rows scanned (the sampled rows when sampling)  |
//! | index lookup  | rows fetched through the index                 |
//! | hash join     | `|L| + |R|`                                    |
//! | sort-merge    | `|L| + |R| + s(|L|) + s(|R|)`, `s(n) = n·⌈log2 n⌉` |
//! | nested loop   | `|L| + |L|·|R|` (inner side rescanned)         |
//!
//! Hash joins build on whichever input is actually smaller. The root operator
//! counts its output without materializing it.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::plan::{AccessPath, JoinAlgorithm, PlanNode, QueryPlan};
use crate::catalog::{sample_mask, CompiledTest, DataType, Database, Table};
use crate::error::{Error, Result};
use crate::query::JoinEdge;

/// Intermediate results above this many rows are refused rather than risking
/// memory exhaustion.
pub const MAX_INTERMEDIATE_ROWS: usize = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecOptions {
    pub sample: Option<SampleSpec>,
    /// Abort with [`Error::WorkLimitExceeded`] once work passes this many tuples.
    pub work_limit: Option<u64>,
}

impl ExecOptions {
    pub fn with_limit(limit: Option<u64>) -> Self {
        ExecOptions {
            sample: None,
            work_limit: limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// The COUNT(*) value.
    pub answer: u64,
    pub tuples_processed: u64,
    pub wall_ns: u64,
    pub sampled: bool,
    pub sample_fraction: f64,
}

/// What superoptimizers minimize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSource {
    #[default]
    Tuples,
    Wall,
}

impl std::str::FromStr for CostSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tuples" => Ok(CostSource::Tuples),
            "wall" => Ok(CostSource::Wall),
            other => Err(Error::Argument(format!("unknown cost source {other:?}"))),
        }
    }
}

pub fn measured_cost(result: &ExecutionResult, source: CostSource) -> f64 {
    match source {
        CostSource::Tuples => result.tuples_processed as f64,
        CostSource::Wall => result.wall_ns as f64,
    }
}

pub fn execute(db: &Database, plan: &QueryPlan) -> Result<ExecutionResult> {
    execute_with(db, plan, &ExecOptions::default())
}

/// Executes over a seeded Bernoulli(`fraction`) sample of every base table.
pub fn execute_on_sample(
    db: &Database,
    plan: &QueryPlan,
    fraction: f64,
    seed: u64,
) -> Result<ExecutionResult> {
    execute_with(
        db,
        plan,
        &ExecOptions {
            sample: Some(SampleSpec { fraction, seed }),
            work_limit: None,
        },
    )
}

pub fn execute_with(
    db: &Database,
    plan: &QueryPlan,
    opts: &ExecOptions,
) -> Result<ExecutionResult> {
    if let Some(s) = opts.sample {
        if !(s.fraction > 0.0 && s.fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "sample fraction {} not in (0, 1]",
                s.fraction
            )));
        }
    }
    plan.root.validate(db.schema())?;
    check_join_types(db, &plan.root)?;
    let start = Instant::now();
    let mut ex = Executor {
        db,
        sample: opts.sample.filter(|s| s.fraction < 1.0),
        limit: opts.work_limit.unwrap_or(u64::MAX),
        tuples: 0,
    };
    let answer = match ex.run(&plan.root, true)? {
        Output::Count(n) => n,
        Output::Rows(rel) => rel.len as u64,
    };
    Ok(ExecutionResult {
        answer,
        tuples_processed: ex.tuples,
        wall_ns: start.elapsed().as_nanos() as u64,
        sampled: ex.sample.is_some(),
        sample_fraction: ex.sample.map_or(1.0, |s| s.fraction),
    })
}

fn check_join_types(db: &Database, node: &PlanNode) -> Result<()> {
    if let PlanNode::Join {
        condition,
        residual,
        left,
        right,
        ..
    } = node
    {
        for e in condition.iter().chain(residual) {
            for c in [&e.left, &e.right] {
                let dt = db.table(&c.table)?.column(&c.column)?.data_type();
                if dt != DataType::Int64 {
                    return Err(Error::Plan(format!(
                        "join column {c} is {dt:?}, expected int64"
                    )));
                }
            }
        }
        check_join_types(db, left)?;
        check_join_types(db, right)?;
    }
    Ok(())
}

/// Tuples of row ids, one column per base table.
struct Rel<'a> {
    tables: Vec<&'a Table>,
    rows: Vec<Vec<u32>>,
    len: usize,
}

impl<'a> Rel<'a> {
    fn key_column(&self, table: &str, column: &str) -> Result<(usize, &'a [i64])> {
        let pos = self
            .tables
            .iter()
            .position(|t| t.name() == table)
            .ok_or_else(|| Error::Plan(format!("{table} is not available at this join")))?;
        let col = self.tables[pos]
            .column(column)?
            .as_i64()
            .ok_or_else(|| Error::Plan(format!("{table}.{column} is not int64")))?;
        Ok((pos, col))
    }
}

#[derive(Clone, Copy)]
struct KeyCol<'a> {
    pos: usize,
    col: &'a [i64],
}

impl KeyCol<'_> {
    #[inline]
    fn key(&self, rel: &Rel, i: usize) -> i64 {
        self.col[rel.rows[self.pos][i] as usize]
    }
}

enum Output<'a> {
    Rows(Rel<'a>),
    Count(u64),
}

struct Executor<'a> {
    db: &'a Database,
    sample: Option<SampleSpec>,
    limit: u64,
    tuples: u64,
}

#[inline]
fn sort_charge(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        n * (64 - (n - 1).leading_zeros() as u64)
    }
}

/// Collects join output, either materialized or counted.
struct Sink<'r, 'a> {
    left: &'r Rel<'a>,
    right: &'r Rel<'a>,
    count_only: bool,
    out: Vec<Vec<u32>>,
    count: u64,
    budget: u64,
    limit: u64,
}

impl Sink<'_, '_> {
    #[inline]
    fn emit(&mut self, li: usize, ri: usize) -> Result<()> {
        self.count += 1;
        if self.count > self.budget {
            return Err(Error::WorkLimitExceeded { limit: self.limit });
        }
        if !self.count_only {
            let lw = self.left.rows.len();
            for (k, col) in self.left.rows.iter().enumerate() {
                self.out[k].push(col[li]);
            }
            for (k, col) in self.right.rows.iter().enumerate() {
                self.out[lw + k].push(col[ri]);
            }
            if self.count as usize > MAX_INTERMEDIATE_ROWS {
                return Err(Error::Capacity(format!(
                    "intermediate result exceeds {MAX_INTERMEDIATE_ROWS} rows"
                )));
            }
        }
        Ok(())
    }
}

impl<'a> Executor<'a> {
    fn charge(&mut self, n: u64) -> Result<()> {
        self.tuples = self.tuples.saturating_add(n);
        if self.tuples > self.limit {
            Err(Error::WorkLimitExceeded { limit: self.limit })
        } else {
            Ok(())
        }
    }

    fn run(&mut self, node: &PlanNode, is_root: bool) -> Result<Output<'a>> {
        match node {
            PlanNode::Access {
                table,
                path,
                filters,
            } => {
                let rel = self.access(table, path, filters)?;
                Ok(if is_root {
                    Output::Count(rel.len as u64)
                } else {
                    Output::Rows(rel)
                })
            }
            PlanNode::Join {
                algorithm,
                condition,
                residual,
                left,
                right,
            } => {
                let l = match self.run(left, false)? {
                    Output::Rows(r) => r,
                    Output::Count(_) => unreachable!("only the root counts"),
                };
                let r = match self.run(right, false)? {
                    Output::Rows(r) => r,
                    Output::Count(_) => unreachable!("only the root counts"),
                };
                self.join(*algorithm, condition.as_ref(), residual, l, r, is_root)
            }
        }
    }

    fn access(
        &mut self,
        name: &str,
        path: &AccessPath,
        filters: &[crate::query::Predicate],
    ) -> Result<Rel<'a>> {
        let table = self.db.table(name)?;
        let mask = self
            .sample
            .map(|s| sample_mask(name, table.row_count(), s.fraction, s.seed));
        let tests: Vec<(usize, CompiledTest)> = filters
            .iter()
            .map(|f| {
                let ci = table
                    .def
                    .column_index(&f.column.column)
                    .ok_or_else(|| Error::Plan(format!("unknown column {}", f.column)))?;
                Ok((ci, table.column_at(ci).compile(f.op, &f.value)?))
            })
            .collect::<Result<_>>()?;
        let passes = |r: usize| tests.iter().all(|(ci, t)| table.column_at(*ci).test(r, t));

        let (consumed, rows): (u64, Vec<u32>) = match path {
            AccessPath::FullScan => match &mask {
                None => {
                    let n = table.row_count();
                    (
                        n as u64,
                        (0..n).filter(|&r| passes(r)).map(|r| r as u32).collect(),
                    )
                }
                Some(m) => {
                    let kept: Vec<usize> = (0..table.row_count()).filter(|&r| m[r]).collect();
                    (
                        kept.len() as u64,
                        kept.into_iter()
                            .filter(|&r| passes(r))
                            .map(|r| r as u32)
                            .collect(),
                    )
                }
            },
            AccessPath::IndexLookup { column } => {
                let ci = table.def.column_index(column).expect("validated");
                let key = tests
                    .iter()
                    .filter(|(c, _)| *c == ci)
                    .find_map(|(_, t)| t.eq_key())
                    .ok_or_else(|| {
                        Error::Plan(format!("no equality filter for index on {name}.{column}"))
                    })?;
                let fetched: Vec<u32> =
                    match key.and_then(|k| table.index(column).and_then(|ix| ix.get(&k))) {
                        Some(ids) => match &mask {
                            None => ids.clone(),
                            Some(m) => ids.iter().copied().filter(|&r| m[r as usize]).collect(),
                        },
                        None => Vec::new(),
                    };
                let consumed = fetched.len() as u64;
                (
                    consumed,
                    fetched
                        .into_iter()
                        .filter(|&r| passes(r as usize))
                        .collect(),
                )
            }
        };
        self.charge(consumed + rows.len() as u64)?;
        let len = rows.len();
        Ok(Rel {
            tables: vec![table],
            rows: vec![rows],
            len,
        })
    }

    fn join(
        &mut self,
        algorithm: JoinAlgorithm,
        condition: Option<&JoinEdge>,
        residual: &[JoinEdge],
        left: Rel<'a>,
        right: Rel<'a>,
        count_only: bool,
    ) -> Result<Output<'a>> {
        let (nl, nr) = (left.len as u64, right.len as u64);

        let keys = |e: &JoinEdge| -> Result<(KeyCol<'a>, KeyCol<'a>)> {
            let (l, r) = if left.tables.iter().any(|t| t.name() == e.left.table) {
                (&e.left, &e.right)
            } else {
                (&e.right, &e.left)
            };
            let (lp, lc) = left.key_column(&l.table, &l.column)?;
            let (rp, rc) = right.key_column(&r.table, &r.column)?;
            Ok((KeyCol { pos: lp, col: lc }, KeyCol { pos: rp, col: rc }))
        };
        let key = condition.map(keys).transpose()?;
        let checks: Vec<(KeyCol, KeyCol)> = residual.iter().map(keys).collect::<Result<_>>()?;
        let residual_ok = |li: usize, ri: usize| {
            checks
                .iter()
                .all(|(lk, rk)| lk.key(&left, li) == rk.key(&right, ri))
        };

        let input = match algorithm {
            JoinAlgorithm::Hash => nl + nr,
            JoinAlgorithm::SortMerge => nl + nr + sort_charge(nl) + sort_charge(nr),
            JoinAlgorithm::NestedLoop => nl.saturating_add(nl.saturating_mul(nr)),
        };
        self.charge(input)?;

        let width = left.rows.len() + right.rows.len();
        let mut sink = Sink {
            left: &left,
            right: &right,
            count_only,
            out: if count_only {
                Vec::new()
            } else {
                vec![Vec::new(); width]
            },
            count: 0,
            budget: self.limit.saturating_sub(self.tuples),
            limit: self.limit,
        };

        match (algorithm, key) {
            (JoinAlgorithm::Hash, Some((lk, rk))) => {
                let build_left = nl <= nr;
                let (build_rel, build_key, probe_rel, probe_key) = if build_left {
                    (&left, lk, &right, rk)
                } else {
                    (&right, rk, &left, lk)
                };
                let mut table: HashMap<i64, Vec<u32>> = HashMap::with_capacity(build_rel.len);
                for i in 0..build_rel.len {
                    table
                        .entry(build_key.key(build_rel, i))
                        .or_default()
                        .push(i as u32);
                }
                for p in 0..probe_rel.len {
                    if let Some(matches) = table.get(&probe_key.key(probe_rel, p)) {
                        for &b in matches {
                            let (li, ri) = if build_left {
                                (b as usize, p)
                            } else {
                                (p, b as usize)
                            };
                            if residual_ok(li, ri) {
                                sink.emit(li, ri)?;
                            }
                        }
                    }
                }
            }
            (JoinAlgorithm::SortMerge, Some((lk, rk))) => {
                let mut lo: Vec<u32> = (0..left.len as u32).collect();
                lo.sort_by_key(|&i| lk.key(&left, i as usize));
                let mut ro: Vec<u32> = (0..right.len as u32).collect();
                ro.sort_by_key(|&i| rk.key(&right, i as usize));
                let (mut i, mut j) = (0, 0);
                while i < lo.len() && j < ro.len() {
                    let a = lk.key(&left, lo[i] as usize);
                    let b = rk.key(&right, ro[j] as usize);
                    match a.cmp(&b) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            let i_end = i + lo[i..]
                                .iter()
                                .take_while(|&&x| lk.key(&left, x as usize) == a)
                                .count();
                            let j_end = j + ro[j..]
                                .iter()
                                .take_while(|&&x| rk.key(&right, x as usize) == a)
                                .count();
                            for &li in &lo[i..i_end] {
                                for &ri in &ro[j..j_end] {
                                    if residual_ok(li as usize, ri as usize) {
                                        sink.emit(li as usize, ri as usize)?;
                                    }
                                }
                            }
                            i = i_end;
                            j = j_end;
                        }
                    }
                }
            }
            (JoinAlgorithm::NestedLoop, key) => {
                for li in 0..left.len {
                    for ri in 0..right.len {
                        let ok = key.is_none_or(|(lk, rk)| lk.key(&left, li) == rk.key(&right, ri));
                        if ok && residual_ok(li, ri) {
                            sink.emit(li, ri)?;
                        }
                    }
                }
            }
            (alg, None) => {
                return Err(Error::Plan(format!(
                    "{} join without a join condition",
                    alg.short()
                )));
            }
        }
        let count = sink.count;
        let out = std::mem::take(&mut sink.out);
        self.charge(count)?;
        if count_only {
            return Ok(Output::Count(count));
        }
        let mut tables = left.tables;
        tables.extend(right.tables);
        Ok(Output::Rows(Rel {
            tables,
            rows: out,
            len: count as usize,
        }))
    }
}

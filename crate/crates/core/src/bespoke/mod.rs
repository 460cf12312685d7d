//! A hand-built engine for the two movie COUNT queries: per-actor and
//! per-company bitmaps of movie ids, plus cumulative rating bitmaps.
//!
//! Q1 is two hash lookups and one intersection count. Q2 restricts Q1 to a
//! rating range `(r1, r2]` by counting against two rating prefixes and
//! subtracting.

mod bitmap;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bitmap::{CompressedBitmap, ARRAY_MAX};

use crate::catalog::{mix64, ColumnData, Database, Statistics, Table, Value};
use crate::engine::execute;
use crate::error::{Error, Result};
use crate::optimizer::{optimize, OptimizerConfig};
use crate::sqlfront::{parse, Q1_SQL};

pub const MAX_RATING: i64 = 5;

/// Immutable once built; safe to query from any number of threads.
#[derive(Clone, Debug, PartialEq)]
pub struct BespokeIndex {
    pub actor_index: HashMap<String, CompressedBitmap>,
    pub company_index: HashMap<String, CompressedBitmap>,
    /// `rating_prefix[r]` holds the movies rated at most `r + 1`.
    pub rating_prefix: [CompressedBitmap; 5],
}

fn int_column<'a>(t: &'a Table, name: &str) -> Result<&'a [i64]> {
    t.column(name)?.as_i64().ok_or_else(|| {
        Error::Schema(format!(
            "column {}.{name} must be an integer column",
            t.name()
        ))
    })
}

/// `id -> name` for an entity table, rejecting duplicate names.
fn names_by_id(t: &Table) -> Result<HashMap<i64, &str>> {
    let ids = int_column(t, "id")?;
    let (dict, codes) = match t.column("name")? {
        ColumnData::Utf8 { dict, codes } => (dict, codes),
        _ => {
            return Err(Error::Schema(format!(
                "column {}.name must be a string column",
                t.name()
            )))
        }
    };
    if dict.len() != codes.len() {
        return Err(Error::Data(format!("{}.name is not unique", t.name())));
    }
    Ok(ids
        .iter()
        .zip(codes)
        .map(|(&id, &c)| (id, dict[c as usize].as_str()))
        .collect())
}

fn movie_id(id: i64) -> Result<u32> {
    u32::try_from(id).map_err(|_| Error::Data(format!("movie id {id} is outside 0..2^32")))
}

/// One bitmap per named entity over the movies it links to. Links to unknown
/// entities or movies are dropped, as an inner join would drop them.
fn link_index(
    db: &Database,
    link: &str,
    entity_table: &str,
    entity_col: &str,
    movies: &CompressedBitmap,
) -> Result<HashMap<String, CompressedBitmap>> {
    let names = names_by_id(db.table(entity_table)?)?;
    let t = db.table(link)?;
    let (ents, ms) = (int_column(t, entity_col)?, int_column(t, "movie_id")?);
    let mut index: HashMap<String, CompressedBitmap> = HashMap::new();
    for (&e, &m) in ents.iter().zip(ms) {
        let Some(name) = names.get(&e) else { continue };
        let Ok(m) = movie_id(m) else { continue };
        if !movies.contains(m) {
            continue;
        }
        if !index.entry((*name).to_string()).or_default().add(m) {
            return Err(Error::Data(format!(
                "duplicate {link} link ({entity_col} = {e}, movie_id = {m})"
            )));
        }
    }
    Ok(index)
}

/// Builds the index in one pass over `Movie`, `Stars` and `Produces` (plus the
/// name columns of `Actor` and `Company`).
pub fn build_index(db: &Database) -> Result<BespokeIndex> {
    let movie = db.table("Movie")?;
    let (ids, ratings) = (int_column(movie, "id")?, int_column(movie, "rating")?);
    let mut by_rating: [Vec<u32>; 5] = Default::default();
    for (&id, &r) in ids.iter().zip(ratings) {
        if !(1..=MAX_RATING).contains(&r) {
            return Err(Error::Data(format!(
                "movie {id} has rating {r}, expected 1..=5"
            )));
        }
        by_rating[(r - 1) as usize].push(movie_id(id)?);
    }
    let mut rating_prefix: [CompressedBitmap; 5] = Default::default();
    let mut acc: Vec<u32> = Vec::with_capacity(ids.len());
    for r in 0..5 {
        acc.extend(&by_rating[r]);
        acc.sort_unstable();
        rating_prefix[r] = acc.iter().copied().collect();
    }
    let all = &rating_prefix[4];
    Ok(BespokeIndex {
        actor_index: link_index(db, "Stars", "Actor", "actor_id", all)?,
        company_index: link_index(db, "Produces", "Company", "company_id", all)?,
        rating_prefix,
    })
}

impl BespokeIndex {
    /// Movies starring `actor` and produced by `company`; 0 for unknown names.
    pub fn q1(&self, actor: &str, company: &str) -> u64 {
        match (self.actor_index.get(actor), self.company_index.get(company)) {
            (Some(a), Some(c)) => a.intersect_cardinality(c),
            _ => 0,
        }
    }

    /// Q1 restricted to ratings in `(r1, r2]`, with `0 <= r1 < r2 <= 5`.
    pub fn q2(&self, actor: &str, company: &str, r1: i64, r2: i64) -> Result<u64> {
        if !(0 <= r1 && r1 < r2 && r2 <= MAX_RATING) {
            return Err(Error::Argument(format!(
                "rating bounds ({r1}, {r2}] must satisfy 0 <= r1 < r2 <= 5"
            )));
        }
        let (Some(a), Some(c)) = (self.actor_index.get(actor), self.company_index.get(company))
        else {
            return Ok(0);
        };
        let shared = a.and(c);
        let upper = shared.intersect_cardinality(&self.rating_prefix[(r2 - 1) as usize]);
        let lower = if r1 >= 1 {
            shared.intersect_cardinality(&self.rating_prefix[(r1 - 1) as usize])
        } else {
            0
        };
        Ok(upper - lower)
    }
}

/// Seeded `(actor name, company name)` pairs. Half are drawn from a random
/// `Stars` row and one of its movie's producers, so they usually share a
/// movie; the rest are independent uniform picks.
pub fn q1_workload(db: &Database, n: usize, seed: u64) -> Result<Vec<(String, String)>> {
    let actors = db.table("Actor")?;
    let companies = db.table("Company")?;
    let stars = db.table("Stars")?;
    let produces = db.table("Produces")?;
    let (s_actor, s_movie) = (
        int_column(stars, "actor_id")?,
        int_column(stars, "movie_id")?,
    );
    let p_company = int_column(produces, "company_id")?;
    let by_movie = produces
        .index("movie_id")
        .ok_or_else(|| Error::Schema("Produces.movie_id must be indexed".into()))?;
    let actor_names = names_by_id(actors)?;
    let company_names = names_by_id(companies)?;
    let name_at = |t: &Table, row: usize| -> Result<String> {
        match t.column("name")?.value(row) {
            Value::Str(s) => Ok(s),
            v => Err(Error::Schema(format!("{}.name holds {v:?}", t.name()))),
        }
    };
    if actors.row_count() == 0 || companies.row_count() == 0 {
        return Err(Error::Data(
            "workload needs at least one actor and one company".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x0b15_u64));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if stars.row_count() > 0 && rng.random_bool(0.5) {
            let r = rng.random_range(0..stars.row_count());
            if let (Some(a), Some(rows)) = (actor_names.get(&s_actor[r]), by_movie.get(&s_movie[r]))
            {
                let p = rows[rng.random_range(0..rows.len())] as usize;
                if let Some(c) = company_names.get(&p_company[p]) {
                    out.push((a.to_string(), c.to_string()));
                    continue;
                }
            }
        }
        let a = name_at(actors, rng.random_range(0..actors.row_count()))?;
        let c = name_at(companies, rng.random_range(0..companies.row_count()))?;
        out.push((a, c));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50_ns: u64,
    pub p90_ns: u64,
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl Percentiles {
    pub fn of(samples: &[u64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_unstable();
        Percentiles {
            p50_ns: percentile(&s, 0.5),
            p90_ns: percentile(&s, 0.9),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_queries: usize,
    pub seed: u64,
    pub index_build_ns: u64,
    pub generic: Percentiles,
    pub bespoke: Percentiles,
    pub speedup_p50: f64,
    pub speedup_p90: f64,
    /// Q1 answers in workload order (identical for both engines).
    pub answers: Vec<u64>,
}

impl BenchReport {
    /// Copy with every timing field zeroed, for determinism checks.
    pub fn without_timings(&self) -> BenchReport {
        let zero = Percentiles {
            p50_ns: 0,
            p90_ns: 0,
        };
        BenchReport {
            index_build_ns: 0,
            generic: zero,
            bespoke: zero,
            speedup_p50: 0.0,
            speedup_p90: 0.0,
            ..self.clone()
        }
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>14} {:>14}", "engine", "P50 (us)", "P90 (us)");
        for (name, p) in [("generic", self.generic), ("bespoke", self.bespoke)] {
            let _ = writeln!(
                s,
                "{:<10} {:>14.3} {:>14.3}",
                name,
                p.p50_ns as f64 / 1e3,
                p.p90_ns as f64 / 1e3
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:>13.1}x {:>13.1}x",
            "speedup", self.speedup_p50, self.speedup_p90
        );
        let _ = writeln!(
            s,
            "{} queries, seed {}, index build {:.1} ms",
            self.n_queries,
            self.seed,
            self.index_build_ns as f64 / 1e6
        );
        s
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    a as f64 / b.max(1) as f64
}

/// Times the same seeded Q1 workload through the generic engine (each query
/// runs the optimizer's plan under exact statistics; planning is not timed)
/// and through the bespoke index. Answers must agree before any timing is
/// reported.
pub fn bench_compare(db: &Database, n_queries: usize, seed: u64) -> Result<BenchReport> {
    if n_queries < 100 {
        return Err(Error::Argument(format!(
            "n_queries = {n_queries}, need at least 100"
        )));
    }
    let t0 = Instant::now();
    let index = build_index(db)?;
    let index_build_ns = t0.elapsed().as_nanos() as u64;

    let stats = Statistics::exact(db)?;
    let template = parse(Q1_SQL)?;
    let workload = q1_workload(db, n_queries, seed)?;
    let mut generic_ns = Vec::with_capacity(n_queries);
    let mut bespoke_ns = Vec::with_capacity(n_queries);
    let mut answers = Vec::with_capacity(n_queries);
    for (a, c) in &workload {
        let q = template.bind(db.schema(), &[Value::Str(a.clone()), Value::Str(c.clone())])?;
        let plan = optimize(&q, &stats, OptimizerConfig::default())?.plan;
        let t = Instant::now();
        let generic = execute(db, &plan)?.answer;
        generic_ns.push(t.elapsed().as_nanos() as u64);

        let t = Instant::now();
        let bespoke =
            std::hint::black_box(index.q1(std::hint::black_box(a), std::hint::black_box(c)));
        bespoke_ns.push(t.elapsed().as_nanos() as u64);

        if generic != bespoke {
            return Err(Error::Mismatch(format!(
                "Q1({a}, {c}): generic engine counted {generic}, bespoke index {bespoke}"
            )));
        }
        answers.push(generic);
    }
    let generic = Percentiles::of(&generic_ns);
    let bespoke = Percentiles::of(&bespoke_ns);
    Ok(BenchReport {
        n_queries,
        seed,
        index_build_ns,
        generic,
        bespoke,
        speedup_p50: ratio(generic.p50_ns, bespoke.p50_ns),
        speedup_p90: ratio(generic.p90_ns, bespoke.p90_ns),
        answers,
    })
}

use std::collections::{BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use qsuper::bespoke::{bench_compare, build_index, q1_workload, BespokeIndex, CompressedBitmap};
use qsuper::catalog::{
    generate_movie_db, ColumnData, DataType, Database, GenConfig, Statistics, Table, TableDef,
    Value,
};
use qsuper::engine::execute;
use qsuper::optimizer::{optimize, OptimizerConfig};
use qsuper::sqlfront::{parse, Q1_SQL, Q2_SQL};
use qsuper::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
enum Op {
    Add(u32),
    Contains(u32),
}

fn value() -> impl Strategy<Value = u32> {
    prop_oneof![0u32..3000, 60_000u32..140_000, any::<u32>()]
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![3 => value().prop_map(Op::Add), 1 => value().prop_map(Op::Contains)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    // 50 cases x 2000 operations = 10^5 randomized operations
    #[test]
    fn bitmap_agrees_with_a_naive_set(ops in prop::collection::vec(op(), 2000), other in prop::collection::vec(value(), 0..3000)) {
        let mut b = CompressedBitmap::new();
        let mut naive = BTreeSet::new();
        for o in &ops {
            match *o {
                Op::Add(x) => prop_assert_eq!(b.add(x), naive.insert(x)),
                Op::Contains(x) => prop_assert_eq!(b.contains(x), naive.contains(&x)),
            }
        }
        prop_assert_eq!(b.cardinality(), naive.len() as u64);
        prop_assert_eq!(b.to_vec(), naive.iter().copied().collect::<Vec<_>>());
        let ob: CompressedBitmap = other.iter().copied().collect();
        let on: BTreeSet<u32> = other.into_iter().collect();
        let both = naive.intersection(&on).count() as u64;
        prop_assert_eq!(b.intersect_cardinality(&ob), both);
        prop_assert_eq!(ob.intersect_cardinality(&b), both);
        prop_assert_eq!(b.and(&ob).to_vec(), naive.intersection(&on).copied().collect::<Vec<_>>());
    }

    #[test]
    fn dense_intersections_agree_with_a_naive_set(
        a in prop::collection::btree_set(0u32..20_000, 3000..9000),
        b in prop::collection::btree_set(0u32..20_000, 0..9000),
    ) {
        let ba: CompressedBitmap = a.iter().copied().collect();
        let bb: CompressedBitmap = b.iter().copied().collect();
        prop_assert_eq!(ba.intersect_cardinality(&bb), a.intersection(&b).count() as u64);
        prop_assert_eq!(ba.and(&bb).cardinality(), a.intersection(&b).count() as u64);
    }
}

fn entity(name: &str, prefix: &str, n: usize) -> Table {
    let names: Vec<String> = (0..n).map(|i| format!("{prefix}_{i}")).collect();
    Table::new(
        TableDef::new(
            name,
            &[("id", DataType::Int64), ("name", DataType::String)],
            "id",
            &["id", "name"],
        ),
        vec![
            ColumnData::Int64((0..n as i64).collect()),
            ColumnData::from_strings(&names),
        ],
    )
    .unwrap()
}

fn links(name: &str, col: &str, pairs: &[(i64, i64)]) -> Table {
    Table::new(
        TableDef::new(
            name,
            &[
                ("id", DataType::Int64),
                (col, DataType::Int64),
                ("movie_id", DataType::Int64),
            ],
            "id",
            &[col, "movie_id"],
        ),
        vec![
            ColumnData::Int64((0..pairs.len() as i64).collect()),
            ColumnData::Int64(pairs.iter().map(|p| p.0).collect()),
            ColumnData::Int64(pairs.iter().map(|p| p.1).collect()),
        ],
    )
    .unwrap()
}

/// A hand-written movie database: `stars` and `produces` are (entity, movie).
fn handmade(
    actors: usize,
    companies: usize,
    ratings: &[i64],
    stars: &[(i64, i64)],
    produces: &[(i64, i64)],
) -> Database {
    let titles: Vec<String> = (0..ratings.len()).map(|i| format!("movie_{i}")).collect();
    let movie = Table::new(
        TableDef::new(
            "Movie",
            &[
                ("id", DataType::Int64),
                ("title", DataType::String),
                ("rating", DataType::Int64),
            ],
            "id",
            &["id"],
        ),
        vec![
            ColumnData::Int64((0..ratings.len() as i64).collect()),
            ColumnData::from_strings(&titles),
            ColumnData::Int64(ratings.to_vec()),
        ],
    )
    .unwrap();
    Database::new(
        vec![
            entity("Actor", "actor", actors),
            movie,
            entity("Company", "company", companies),
            links("Stars", "actor_id", stars),
            links("Produces", "company_id", produces),
        ],
        0,
    )
    .unwrap()
}

fn naive_links(
    db: &Database,
    table: &str,
    col: &str,
    prefix: &str,
) -> HashMap<String, BTreeSet<u32>> {
    let t = db.table(table).unwrap();
    let mut out: HashMap<String, BTreeSet<u32>> = HashMap::new();
    for r in 0..t.row_count() {
        let e = t.column(col).unwrap().key(r).unwrap();
        let m = t.column("movie_id").unwrap().key(r).unwrap();
        out.entry(format!("{prefix}_{e}"))
            .or_default()
            .insert(m as u32);
    }
    out
}

fn ratings(db: &Database) -> Vec<i64> {
    db.table("Movie")
        .unwrap()
        .column("rating")
        .unwrap()
        .as_i64()
        .unwrap()
        .to_vec()
}

#[test]
fn empty_stars_give_an_empty_actor_index() {
    let db = handmade(3, 1, &[1, 2], &[], &[(0, 0)]);
    let ix = build_index(&db).unwrap();
    assert!(ix.actor_index.is_empty());
    assert_eq!(ix.company_index.len(), 1);
    assert_eq!(ix.q1("actor_0", "company_0"), 0);
}

#[test]
fn actor_and_company_bitmaps_match_naive_sets() {
    let db = generate_movie_db(&GenConfig::tiny(1)).unwrap();
    let ix = build_index(&db).unwrap();
    let actors = naive_links(&db, "Stars", "actor_id", "actor");
    assert_eq!(ix.actor_index.len(), actors.len());
    for (name, set) in &actors {
        assert_eq!(
            ix.actor_index[name].to_vec(),
            set.iter().copied().collect::<Vec<_>>(),
            "{name}"
        );
    }
    let companies = naive_links(&db, "Produces", "company_id", "company");
    assert_eq!(ix.company_index.len(), companies.len());
    for (name, set) in &companies {
        assert_eq!(
            ix.company_index[name].to_vec(),
            set.iter().copied().collect::<Vec<_>>(),
            "{name}"
        );
    }
    assert_eq!(build_index(&db).unwrap(), ix);
}

#[test]
fn rating_prefixes_form_a_containment_chain() {
    let db = generate_movie_db(&GenConfig {
        n_movies: 5000,
        ..GenConfig::tiny(3)
    })
    .unwrap();
    let ix = build_index(&db).unwrap();
    let r = ratings(&db);
    for k in 0..5 {
        let want: Vec<u32> = (0..r.len() as u32)
            .filter(|&m| r[m as usize] <= k as i64 + 1)
            .collect();
        assert_eq!(ix.rating_prefix[k].to_vec(), want);
        if k > 0 {
            assert!(ix.rating_prefix[k - 1].is_subset(&ix.rating_prefix[k]));
        }
    }
    assert_eq!(ix.rating_prefix[4].cardinality(), r.len() as u64);
}

#[test]
fn unknown_names_count_zero() {
    let db = generate_movie_db(&GenConfig::tiny(1)).unwrap();
    let ix = build_index(&db).unwrap();
    assert_eq!(ix.q1("nobody", "company_0"), 0);
    assert_eq!(ix.q1("actor_0", "nobody"), 0);
    assert_eq!(ix.q2("nobody", "company_0", 0, 5).unwrap(), 0);
}

#[test]
fn actor_in_all_of_a_companys_movies_counts_the_company() {
    let stars: Vec<(i64, i64)> = (0..6).map(|m| (0, m)).chain([(1, 1)]).collect();
    let db = handmade(
        2,
        2,
        &[1, 2, 3, 4, 5, 5],
        &stars,
        &[(0, 0), (0, 2), (0, 3), (1, 1)],
    );
    let ix = build_index(&db).unwrap();
    assert_eq!(
        ix.q1("actor_0", "company_0"),
        ix.company_index["company_0"].cardinality()
    );
    assert_eq!(ix.q1("actor_0", "company_0"), 3);
    assert_eq!(ix.q1("actor_1", "company_0"), 0);
    assert_eq!(ix.q2("actor_0", "company_0", 2, 4).unwrap(), 2);
}

#[test]
fn invalid_rating_bounds_are_rejected() {
    let db = generate_movie_db(&GenConfig::tiny(1)).unwrap();
    let ix = build_index(&db).unwrap();
    for (r1, r2) in [(3, 3), (4, 2), (-1, 3), (0, 6)] {
        assert!(
            matches!(
                ix.q2("actor_0", "company_0", r1, r2),
                Err(Error::Argument(_))
            ),
            "({r1}, {r2}]"
        );
    }
}

#[test]
fn missing_tables_and_columns_are_named() {
    let db = generate_movie_db(&GenConfig::tiny(1)).unwrap();
    let without = |skip: &str| {
        Database::new(
            db.tables()
                .iter()
                .filter(|t| t.name() != skip)
                .cloned()
                .collect(),
            0,
        )
        .unwrap()
    };
    let err = build_index(&without("Produces")).unwrap_err().to_string();
    assert!(err.contains("Produces"), "{err}");
    let err = build_index(&without("Movie")).unwrap_err().to_string();
    assert!(err.contains("Movie"), "{err}");

    let movie = Table::new(
        TableDef::new("Movie", &[("id", DataType::Int64)], "id", &["id"]),
        vec![ColumnData::Int64(vec![0])],
    )
    .unwrap();
    let mut tables: Vec<Table> = db
        .tables()
        .iter()
        .filter(|t| t.name() != "Movie")
        .cloned()
        .collect();
    tables.push(movie);
    let err = build_index(&Database::new(tables, 0).unwrap())
        .unwrap_err()
        .to_string();
    assert!(err.contains("Movie.rating"), "{err}");
}

#[test]
fn duplicate_links_are_rejected() {
    let db = handmade(1, 1, &[1], &[(0, 0), (0, 0)], &[(0, 0)]);
    assert!(matches!(build_index(&db), Err(Error::Data(_))));
}

fn medium(seed: u64) -> Database {
    generate_movie_db(&GenConfig {
        seed,
        n_actors: 2000,
        n_movies: 5000,
        n_companies: 50,
        stars_per_movie: 5,
        companies_per_movie: 1,
        ..GenConfig::default()
    })
    .unwrap()
}

fn generic(db: &Database, stats: &Statistics, sql: &str, params: &[Value]) -> u64 {
    let q = parse(sql).unwrap().bind(db.schema(), params).unwrap();
    let plan = optimize(&q, stats, OptimizerConfig::default())
        .unwrap()
        .plan;
    execute(db, &plan).unwrap().answer
}

#[test]
fn q1_and_q2_agree_with_the_generic_engine() {
    let db = medium(7);
    let stats = Statistics::exact(&db).unwrap();
    let ix = build_index(&db).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nonzero = 0;
    for (a, c) in q1_workload(&db, 100, 7).unwrap() {
        let names = [Value::Str(a.clone()), Value::Str(c.clone())];
        let want = generic(&db, &stats, Q1_SQL, &names);
        assert_eq!(ix.q1(&a, &c), want, "Q1({a}, {c})");
        nonzero += usize::from(want > 0);

        let r2 = rng.random_range(1..=5);
        let r1 = rng.random_range(0..r2);
        let params = [
            names[0].clone(),
            names[1].clone(),
            Value::Int(r1),
            Value::Int(r2),
        ];
        assert_eq!(
            ix.q2(&a, &c, r1, r2).unwrap(),
            generic(&db, &stats, Q2_SQL, &params),
            "Q2({a}, {c}, {r1}, {r2})"
        );
        assert_eq!(ix.q2(&a, &c, 0, 5).unwrap(), ix.q1(&a, &c));
    }
    assert!(
        nonzero >= 20,
        "workload should exercise non-empty answers ({nonzero})"
    );
}

#[test]
fn single_rating_slices_count_exact_ratings() {
    let db = medium(11);
    let ix = build_index(&db).unwrap();
    let r = ratings(&db);
    for (a, c) in q1_workload(&db, 60, 11).unwrap() {
        let shared: HashSet<u32> = ix
            .actor_index
            .get(&a)
            .map(|b| b.to_vec())
            .unwrap_or_default()
            .into_iter()
            .collect();
        let comp: HashSet<u32> = ix
            .company_index
            .get(&c)
            .map(|b| b.to_vec())
            .unwrap_or_default()
            .into_iter()
            .collect();
        for stars in 1..=5 {
            let want = shared
                .intersection(&comp)
                .filter(|&&m| r[m as usize] == stars)
                .count() as u64;
            assert_eq!(ix.q2(&a, &c, stars - 1, stars).unwrap(), want);
        }
    }
}

#[test]
fn bench_report_is_consistent_and_deterministic() {
    let db = medium(3);
    assert!(matches!(bench_compare(&db, 99, 1), Err(Error::Argument(_))));
    let a = bench_compare(&db, 100, 1).unwrap();
    let b = bench_compare(&db, 100, 1).unwrap();
    assert_eq!(a.without_timings(), b.without_timings());
    assert_eq!(a.answers.len(), 100);
    assert_eq!(
        a.speedup_p50,
        a.generic.p50_ns as f64 / a.bespoke.p50_ns.max(1) as f64
    );
    assert_eq!(
        a.speedup_p90,
        a.generic.p90_ns as f64 / a.bespoke.p90_ns.max(1) as f64
    );
    assert!(a.generic.p50_ns <= a.generic.p90_ns && a.bespoke.p50_ns <= a.bespoke.p90_ns);
    let ix = build_index(&db).unwrap();
    let expected: Vec<u64> = q1_workload(&db, 100, 1)
        .unwrap()
        .iter()
        .map(|(a, c)| ix.q1(a, c))
        .collect();
    assert_eq!(a.answers, expected);
    let table = a.render_table();
    assert!(table.contains("P50") && table.contains("bespoke"));
    let json = serde_json::to_string(&a).unwrap();
    assert!(json.contains("speedup_p90"));
}

#[test]
fn index_is_shareable_across_threads() {
    fn assert_sync<T: Send + Sync>() {}
    assert_sync::<BespokeIndex>();
}

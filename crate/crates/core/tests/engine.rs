use proptest::prelude::*;
use qsuper::catalog::{
    generate_movie_db, true_cardinality, true_cardinality_sampled, ColumnData, DataType, Database,
    GenConfig, Table, TableDef, Value,
};
use qsuper::engine::{
    execute, execute_batch, execute_on_sample, execute_with, measured_cost, AccessPath, CostSource,
    ExecOptions, ExecutionResult, JoinAlgorithm, PlanNode, QueryPlan,
};
use qsuper::par::Parallelism;
use qsuper::query::BoundQuery;
use qsuper::sqlfront::{parse, Q1_SQL, Q2_SQL};
use qsuper::Error;

fn tiny() -> Database {
    generate_movie_db(&GenConfig::tiny(1)).unwrap()
}

/// Actor and company names that co-occur on some movie, so Q1 is non-empty.
fn linked_names(db: &Database, row: usize) -> (String, String) {
    let stars = db.table("Stars").unwrap();
    let produces = db.table("Produces").unwrap();
    let actor = stars.column("actor_id").unwrap().key(row).unwrap();
    let movie = stars.column("movie_id").unwrap().key(row).unwrap();
    let p = (0..produces.row_count())
        .find(|&r| produces.column("movie_id").unwrap().key(r) == Some(movie))
        .unwrap();
    let company = produces.column("company_id").unwrap().key(p).unwrap();
    (format!("actor_{actor}"), format!("company_{company}"))
}

fn q1(db: &Database, actor: &str, company: &str) -> BoundQuery {
    parse(Q1_SQL)
        .unwrap()
        .bind(
            db.schema(),
            &[Value::Str(actor.into()), Value::Str(company.into())],
        )
        .unwrap()
}

fn leaf(q: &BoundQuery, t: &str) -> PlanNode {
    let indexed = q.filters_on(t).any(|f| f.column.column == "name");
    let path = if indexed {
        AccessPath::IndexLookup {
            column: "name".into(),
        }
    } else {
        AccessPath::FullScan
    };
    PlanNode::access(q, t, path)
}

fn left_deep(q: &BoundQuery, order: &[&str], alg: JoinAlgorithm) -> QueryPlan {
    let mut node = leaf(q, order[0]);
    for t in &order[1..] {
        let right = leaf(q, t);
        let crossing = !q
            .edges_between(node.table_set(q), right.table_set(q))
            .is_empty();
        let alg = if crossing {
            alg
        } else {
            JoinAlgorithm::NestedLoop
        };
        node = PlanNode::join(q, alg, node, right);
    }
    QueryPlan::new(0, node)
}

const Q1_ORDERS: [[&str; 5]; 4] = [
    ["Actor", "Stars", "Movie", "Produces", "Company"],
    ["Company", "Produces", "Movie", "Stars", "Actor"],
    ["Movie", "Stars", "Produces", "Actor", "Company"],
    ["Actor", "Company", "Stars", "Produces", "Movie"],
];

fn without_wall(mut r: ExecutionResult) -> ExecutionResult {
    r.wall_ns = 0;
    r
}

#[test]
fn full_scan_counts_every_row() {
    let def = TableDef::new("T", &[("id", DataType::Int64)], "id", &[]);
    let t = Table::new(def, vec![ColumnData::Int64((0..100).collect())]).unwrap();
    let db = Database::new(vec![t], 0).unwrap();
    let q = BoundQuery::new(db.schema(), vec!["T".into()], vec![], vec![]).unwrap();
    let r = execute(
        &db,
        &QueryPlan::new(1, PlanNode::access(&q, "T", AccessPath::FullScan)),
    )
    .unwrap();
    assert_eq!(r.answer, 100);
    assert_eq!(r.tuples_processed, 200);
    assert!(!r.sampled);
    assert_eq!(r.sample_fraction, 1.0);
}

#[test]
fn q1_answers_match_the_naive_oracle_for_every_order_and_algorithm() {
    let db = tiny();
    for row in [0, 5, 17] {
        let (a, c) = linked_names(&db, row);
        let q = q1(&db, &a, &c);
        let truth = true_cardinality(&db, &q).unwrap();
        assert!(truth > 0);
        for order in &Q1_ORDERS {
            for alg in JoinAlgorithm::ALL {
                let r = execute(&db, &left_deep(&q, order, alg)).unwrap();
                assert_eq!(r.answer, truth, "{order:?} {alg:?}");
            }
        }
        let bushy = PlanNode::join(
            &q,
            JoinAlgorithm::Hash,
            PlanNode::join(
                &q,
                JoinAlgorithm::SortMerge,
                leaf(&q, "Actor"),
                leaf(&q, "Stars"),
            ),
            PlanNode::join(
                &q,
                JoinAlgorithm::Hash,
                leaf(&q, "Movie"),
                PlanNode::join(
                    &q,
                    JoinAlgorithm::NestedLoop,
                    leaf(&q, "Produces"),
                    leaf(&q, "Company"),
                ),
            ),
        );
        assert_eq!(
            execute(&db, &QueryPlan::new(9, bushy)).unwrap().answer,
            truth
        );
    }
}

#[test]
fn join_order_changes_work_but_not_the_answer() {
    let db = tiny();
    let (a, c) = linked_names(&db, 0);
    let q = q1(&db, &a, &c);
    let selective = execute(&db, &left_deep(&q, &Q1_ORDERS[0], JoinAlgorithm::Hash)).unwrap();
    let cross_first = execute(&db, &left_deep(&q, &Q1_ORDERS[3], JoinAlgorithm::Hash)).unwrap();
    let scan_first = execute(&db, &left_deep(&q, &Q1_ORDERS[2], JoinAlgorithm::Hash)).unwrap();
    assert_eq!(selective.answer, scan_first.answer);
    assert_eq!(selective.answer, cross_first.answer);
    assert_ne!(selective.tuples_processed, scan_first.tuples_processed);
    assert!(selective.tuples_processed < scan_first.tuples_processed);
}

#[test]
fn cross_joins_execute_correctly() {
    let db = tiny();
    let q = parse("SELECT COUNT(*) FROM Actor, Company WHERE Actor.id < 4")
        .unwrap()
        .bind(db.schema(), &[])
        .unwrap();
    let plan = QueryPlan::new(
        0,
        PlanNode::join(
            &q,
            JoinAlgorithm::NestedLoop,
            PlanNode::access(&q, "Actor", AccessPath::FullScan),
            PlanNode::access(&q, "Company", AccessPath::FullScan),
        ),
    );
    assert!(plan.root.has_cross_join());
    let r = execute(&db, &plan).unwrap();
    assert_eq!(r.answer, 4 * 6);
    assert_eq!(r.answer, true_cardinality(&db, &q).unwrap());
}

#[test]
fn hash_join_without_condition_is_rejected() {
    let db = tiny();
    let q = parse("SELECT COUNT(*) FROM Actor, Company")
        .unwrap()
        .bind(db.schema(), &[])
        .unwrap();
    let plan = QueryPlan::new(
        0,
        PlanNode::join(
            &q,
            JoinAlgorithm::Hash,
            PlanNode::access(&q, "Actor", AccessPath::FullScan),
            PlanNode::access(&q, "Company", AccessPath::FullScan),
        ),
    );
    assert!(matches!(execute(&db, &plan), Err(Error::Plan(_))));
}

#[test]
fn invalid_plans_are_refused() {
    let db = tiny();
    let missing = QueryPlan::new(
        0,
        PlanNode::Access {
            table: "Director".into(),
            path: AccessPath::FullScan,
            filters: vec![],
        },
    );
    assert!(execute(&db, &missing).is_err());
    let q = parse("SELECT COUNT(*) FROM Movie WHERE rating = 3")
        .unwrap()
        .bind(db.schema(), &[])
        .unwrap();
    let bad_index = QueryPlan::new(
        0,
        PlanNode::access(
            &q,
            "Movie",
            AccessPath::IndexLookup {
                column: "rating".into(),
            },
        ),
    );
    assert!(execute(&db, &bad_index).is_err());
}

#[test]
fn index_lookup_and_scan_agree() {
    let db = tiny();
    let q = parse("SELECT COUNT(*) FROM Stars WHERE actor_id = 0")
        .unwrap()
        .bind(db.schema(), &[])
        .unwrap();
    let scan = execute(
        &db,
        &QueryPlan::new(0, PlanNode::access(&q, "Stars", AccessPath::FullScan)),
    )
    .unwrap();
    let ix = execute(
        &db,
        &QueryPlan::new(
            0,
            PlanNode::access(
                &q,
                "Stars",
                AccessPath::IndexLookup {
                    column: "actor_id".into(),
                },
            ),
        ),
    )
    .unwrap();
    assert_eq!(scan.answer, ix.answer);
    assert_eq!(scan.answer, true_cardinality(&db, &q).unwrap());
    assert!(ix.tuples_processed < scan.tuples_processed);
}

#[test]
fn full_fraction_sample_is_identical_to_plain_execution() {
    let db = tiny();
    let (a, c) = linked_names(&db, 3);
    let plan = left_deep(&q1(&db, &a, &c), &Q1_ORDERS[1], JoinAlgorithm::SortMerge);
    let full = without_wall(execute(&db, &plan).unwrap());
    let sampled = without_wall(execute_on_sample(&db, &plan, 1.0, 99).unwrap());
    assert_eq!(full, sampled);
}

#[test]
fn sampled_execution_is_deterministic_and_matches_the_sampled_oracle() {
    let db = tiny();
    let q = parse("SELECT COUNT(*) FROM Stars, Movie, Actor WHERE Stars.movie_id = Movie.id AND Stars.actor_id = Actor.id")
        .unwrap()
        .bind(db.schema(), &[])
        .unwrap();
    let plan = left_deep(&q, &["Stars", "Movie", "Actor"], JoinAlgorithm::Hash);
    let a = without_wall(execute_on_sample(&db, &plan, 0.5, 7).unwrap());
    let b = without_wall(execute_on_sample(&db, &plan, 0.5, 7).unwrap());
    assert_eq!(a, b);
    assert!(a.sampled);
    for seed in 0..5 {
        let r = execute_on_sample(&db, &plan, 0.3, seed).unwrap();
        assert_eq!(
            r.answer,
            true_cardinality_sampled(&db, &q, 0.3, seed).unwrap(),
            "seed {seed}"
        );
    }
}

#[test]
fn sample_fraction_must_be_in_range() {
    let db = tiny();
    let q = parse("SELECT COUNT(*) FROM Movie")
        .unwrap()
        .bind(db.schema(), &[])
        .unwrap();
    let plan = QueryPlan::new(0, PlanNode::access(&q, "Movie", AccessPath::FullScan));
    for f in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(matches!(
            execute_on_sample(&db, &plan, f, 1),
            Err(Error::Argument(_))
        ));
    }
}

#[test]
fn work_limit_aborts_only_when_exceeded() {
    let db = tiny();
    let (a, c) = linked_names(&db, 0);
    let plan = left_deep(&q1(&db, &a, &c), &Q1_ORDERS[2], JoinAlgorithm::NestedLoop);
    let full = execute(&db, &plan).unwrap();
    let at_limit = execute_with(
        &db,
        &plan,
        &ExecOptions::with_limit(Some(full.tuples_processed)),
    )
    .unwrap();
    assert_eq!(at_limit.answer, full.answer);
    let err = execute_with(
        &db,
        &plan,
        &ExecOptions::with_limit(Some(full.tuples_processed - 1)),
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::WorkLimitExceeded { limit } if limit == full.tuples_processed - 1)
    );
    let err = execute_with(&db, &plan, &ExecOptions::with_limit(Some(10))).unwrap_err();
    assert!(matches!(err, Error::WorkLimitExceeded { limit: 10 }));
}

#[test]
fn measured_cost_reads_the_selected_source() {
    let mk = |t, w| ExecutionResult {
        answer: 0,
        tuples_processed: t,
        wall_ns: w,
        sampled: false,
        sample_fraction: 1.0,
    };
    assert_eq!(measured_cost(&mk(0, 5), CostSource::Tuples), 0.0);
    assert!(
        measured_cost(&mk(10, 0), CostSource::Tuples)
            < measured_cost(&mk(11, 0), CostSource::Tuples)
    );
    assert_eq!(measured_cost(&mk(10, 1234), CostSource::Wall), 1234.0);
    assert_eq!(CostSource::default(), CostSource::Tuples);
    assert_eq!("wall".parse::<CostSource>().unwrap(), CostSource::Wall);
}

#[test]
fn plans_round_trip_through_json() {
    let db = tiny();
    let (a, c) = linked_names(&db, 0);
    let q = parse(Q2_SQL)
        .unwrap()
        .bind(
            db.schema(),
            &[Value::Str(a), Value::Str(c), Value::Int(1), Value::Int(4)],
        )
        .unwrap();
    let plan = left_deep(&q, &Q1_ORDERS[0], JoinAlgorithm::SortMerge);
    let json = plan.to_json().unwrap();
    assert!(json.contains("\"node\""));
    let back = QueryPlan::from_json(&json).unwrap();
    assert_eq!(back, plan);
    assert_eq!(
        without_wall(execute(&db, &back).unwrap()),
        without_wall(execute(&db, &plan).unwrap())
    );
}

#[test]
fn batch_execution_is_mode_independent() {
    let db = tiny();
    let (a, c) = linked_names(&db, 2);
    let q = q1(&db, &a, &c);
    let plans: Vec<QueryPlan> = Q1_ORDERS
        .iter()
        .flat_map(|o| JoinAlgorithm::ALL.map(|alg| left_deep(&q, o, alg)))
        .collect();
    let run = |mode| -> Vec<ExecutionResult> {
        execute_batch(&db, &plans, &ExecOptions::default(), mode)
            .into_iter()
            .map(|r| without_wall(r.unwrap()))
            .collect()
    };
    assert_eq!(run(Parallelism::Sequential), run(Parallelism::Parallel));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn answers_are_plan_invariant(
        seed in 0u64..1000,
        lo in 0i64..5,
        width in 0i64..5,
        order in 0usize..4,
        alg in 0usize..3,
        sample_seed in 0u64..50,
    ) {
        let db = generate_movie_db(&GenConfig::tiny(seed)).unwrap();
        let (a, c) = linked_names(&db, (seed % 40) as usize);
        let q = parse(Q2_SQL).unwrap().bind(
            db.schema(),
            &[Value::Str(a), Value::Str(c), Value::Int(lo), Value::Int(lo + width)],
        ).unwrap();
        let plan = left_deep(&q, &Q1_ORDERS[order], JoinAlgorithm::ALL[alg]);
        prop_assert_eq!(execute(&db, &plan).unwrap().answer, true_cardinality(&db, &q).unwrap());
        prop_assert_eq!(
            execute_on_sample(&db, &plan, 0.6, sample_seed).unwrap().answer,
            true_cardinality_sampled(&db, &q, 0.6, sample_seed).unwrap()
        );
        let a = without_wall(execute(&db, &plan).unwrap());
        let b = without_wall(execute(&db, &plan).unwrap());
        prop_assert_eq!(a, b);
    }
}

//! End-to-end pipeline tests: parse, bind, rewrite, render, execute on the
//! embedded backend.

use std::sync::Arc;

use qrw_core::accountant::EventKind;
use qrw_core::connectors::{Connection, Fixture};
use qrw_core::frontend::{bind, parse};
use qrw_core::privacy_unit::PrivacyUnitDefinition;
use qrw_core::render::{render, Dialect};
use qrw_core::rewriting::{rewrite, Budget, Property, RewriteOptions};
use qrw_core::{Catalog, Relation, Value};

const CATALOG: &str = r#"{
    "tables": [
        {"name": "table_1", "columns": [
            {"name": "id", "type": "integer"},
            {"name": "a", "type": "integer", "min": 0, "max": 10},
            {"name": "b", "type": "float", "min": -1, "max": 1}
        ], "visibility": "private", "synthetic": "synthetic_table_1"},
        {"name": "users", "columns": [
            {"name": "id", "type": "integer"},
            {"name": "city", "type": "text", "values": ["paris", "rome"]}
        ], "visibility": "private"},
        {"name": "orders", "columns": [
            {"name": "id", "type": "integer"},
            {"name": "user_id", "type": "integer"},
            {"name": "total", "type": "float", "min": 0, "max": 4}
        ], "visibility": "private"},
        {"name": "cities", "columns": [
            {"name": "name", "type": "text"},
            {"name": "population", "type": "integer", "min": 0, "max": 10000000}
        ], "visibility": "public"}
    ]
}"#;

const PU: &str = r#"[
    {"table": "table_1", "path": [], "pid": "id"},
    {"table": "users", "path": [], "pid": "id"},
    {"table": "orders", "path": [
        {"referring": "user_id", "to_table": "users", "referred": "id"}
    ], "pid": "id"}
]"#;

fn setup() -> (Catalog, PrivacyUnitDefinition) {
    let catalog = Catalog::from_json(CATALOG).unwrap();
    let pu = PrivacyUnitDefinition::parse(PU, &catalog).unwrap();
    (catalog, pu)
}

fn table_1_fixture() -> Fixture {
    // 30 rows, one user each; a cycles 1..=3, b is dyadic in [-1, 1].
    Fixture {
        name: "table_1".to_string(),
        columns: vec![
            ("id".to_string(), "integer".to_string()),
            ("a".to_string(), "integer".to_string()),
            ("b".to_string(), "float".to_string()),
        ],
        rows: (0..30)
            .map(|i| {
                vec![
                    Value::Integer(i),
                    Value::Integer(i % 3 + 1),
                    Value::Float(((i % 8) as f64) / 4.0 - 1.0),
                ]
            })
            .collect(),
    }
}

fn options(epsilon: f64, delta: f64) -> RewriteOptions {
    RewriteOptions::new(Property::Pubd, Budget::new(epsilon, delta).unwrap())
}

fn rewrite_sql(
    sql: &str,
    catalog: &Catalog,
    pu: &PrivacyUnitDefinition,
    opts: &RewriteOptions,
) -> (Arc<Relation>, qrw_core::rewriting::RewriteOutcome) {
    let rel = bind(&parse(sql).unwrap(), catalog, Some(pu)).unwrap();
    let outcome = rewrite(&rel, catalog, pu, opts).unwrap();
    (rel, outcome)
}

#[test]
fn grouped_count_with_public_keys_end_to_end() {
    let (catalog, pu) = setup();
    let sql = "SELECT a, count(abs(10*a+b)) AS x FROM table_1 WHERE b > -0.1 AND a IN (1,2,3) GROUP BY a";
    let (original, outcome) = rewrite_sql(sql, &catalog, &pu, &options(1.0, 1e-5));

    // Schema preserved at the root: names and kinds.
    assert_eq!(outcome.relation.schema().names(), original.schema().names());
    assert_eq!(outcome.report.n_dp, 1);
    assert!(outcome
        .report
        .mechanisms
        .iter()
        .all(|m| m.kind == "gaussian-sum"), "public keys must not be thresholded");

    let rendered = render(&outcome.relation, &Dialect::embedded()).unwrap();
    let mut conn = Connection::open_embedded(None, 5).unwrap();
    conn.load_fixture(&table_1_fixture()).unwrap();
    let out = conn.execute(&rendered).unwrap();
    assert_eq!(out.columns, vec!["a", "x"]);
    // all three public groups released, exactly once each
    let mut groups: Vec<i64> = out
        .rows
        .iter()
        .map(|r| match r[0] {
            Value::Integer(v) => v,
            _ => panic!("non-integer key"),
        })
        .collect();
    groups.sort();
    assert_eq!(groups, vec![1, 2, 3]);
    // counts are noisy integers near the true count (rows with b > -0.1
    // and matching group)
    for row in &out.rows {
        let Value::Integer(x) = row[1] else { panic!("expected integer count, got {:?}", row[1]) };
        assert!(x.abs() < 1000, "noisy count {x} wildly off");
    }
}

#[test]
fn noise_free_variant_matches_direct_query() {
    let (catalog, pu) = setup();
    let sql = "SELECT a, count(*) AS n, sum(b) AS s FROM table_1 WHERE a IN (1,2,3) GROUP BY a";
    let mut opts = options(1.0, 1e-5);
    opts.noise = false;
    let (_, outcome) = rewrite_sql(sql, &catalog, &pu, &opts);
    let rendered = render(&outcome.relation, &Dialect::embedded()).unwrap();

    let mut conn = Connection::open_embedded(None, 0).unwrap();
    conn.load_fixture(&table_1_fixture()).unwrap();
    let dp_out = conn.execute(&rendered).unwrap();
    let direct = conn
        .execute("SELECT a, count(*) AS n, sum(b) AS s FROM table_1 WHERE a IN (1,2,3) GROUP BY a ORDER BY a")
        .unwrap();
    let mut dp_rows = dp_out.rows.clone();
    dp_rows.sort_by_key(|r| match r[0] {
        Value::Integer(v) => v,
        _ => 0,
    });
    assert_eq!(dp_rows.len(), direct.rows.len());
    for (dp, dr) in dp_rows.iter().zip(&direct.rows) {
        assert_eq!(dp[0], dr[0]);
        // count exact (each user owns one row, no clipping distortion)
        assert_eq!(dp[1], dr[1]);
        // sum within float tolerance
        let (Some(a), Some(b)) = (dp[2].as_f64(), dr[2].as_f64()) else { panic!() };
        assert!((a - b).abs() < 1e-9, "noise-free sum {a} != direct {b}");
    }
}

#[test]
fn privacy_unit_path_through_join() {
    let (catalog, pu) = setup();
    let sql = "SELECT sum(total) AS t FROM orders";
    let (_, outcome) = rewrite_sql(sql, &catalog, &pu, &options(1.0, 1e-4));
    let rendered = render(&outcome.relation, &Dialect::embedded()).unwrap();
    // the PID path joins users
    assert!(rendered.contains("\"users\""), "expected the PID path join in: {rendered}");

    let mut conn = Connection::open_embedded(None, 3).unwrap();
    conn.load_fixture(&Fixture {
        name: "users".to_string(),
        columns: vec![
            ("id".to_string(), "integer".to_string()),
            ("city".to_string(), "text".to_string()),
        ],
        rows: (0..10)
            .map(|i| vec![Value::Integer(i), Value::Text("paris".to_string())])
            .collect(),
    })
    .unwrap();
    conn.load_fixture(&Fixture {
        name: "orders".to_string(),
        columns: vec![
            ("id".to_string(), "integer".to_string()),
            ("user_id".to_string(), "integer".to_string()),
            ("total".to_string(), "float".to_string()),
        ],
        rows: (0..20)
            .map(|i| vec![Value::Integer(i), Value::Integer(i % 10), Value::Float(2.0)])
            .collect(),
    })
    .unwrap();
    let out = conn.execute(&rendered).unwrap();
    assert_eq!(out.rows.len(), 1);
    let Some(v) = out.rows[0][0].as_f64() else { panic!("null sum") };
    // true sum is 40; each user contributes 4 <= c = 4, sigma moderate
    assert!((v - 40.0).abs() < 200.0, "noisy sum {v} implausibly far");
}

#[test]
fn budget_splits_across_two_dp_reduces() {
    let (catalog, pu) = setup();
    let sql = "WITH s1 AS (SELECT sum(b) AS v FROM table_1), s2 AS (SELECT count(*) AS w FROM table_1) SELECT v, w FROM s1 CROSS JOIN s2";
    let (_, outcome) = rewrite_sql(sql, &catalog, &pu, &options(1.0, 1e-4));
    assert_eq!(outcome.report.n_dp, 2);
    let per = outcome.report.per_mechanism.unwrap();
    assert_eq!(per.epsilon, 0.5);
    assert_eq!(per.delta, 5e-5);
    // shares over mechanisms of each reduce sum to the reduce's share
    let eps_total: f64 = outcome.report.mechanisms.iter().map(|m| m.epsilon).sum();
    let delta_total: f64 = outcome.report.mechanisms.iter().map(|m| m.delta).sum();
    assert!((eps_total - 1.0).abs() <= f64::EPSILON * 2.0);
    assert!((delta_total - 1e-4).abs() <= 1e-19);
    // and the accountant sees the same events
    assert!(outcome.events.len() >= 2);
}

#[test]
fn public_query_with_target_pub_is_identity() {
    let (catalog, pu) = setup();
    let sql = "SELECT name, sum(population) AS p FROM cities GROUP BY name";
    let rel = bind(&parse(sql).unwrap(), &catalog, Some(&pu)).unwrap();
    let mut opts = options(1.0, 1e-5);
    opts.target = Property::Pub;
    let outcome = rewrite(&rel, &catalog, &pu, &opts).unwrap();
    assert!(outcome.relation.structurally_eq(&rel));
    assert_eq!(outcome.report.n_dp, 0);
    assert!(outcome.events.is_empty());
}

#[test]
fn select_star_falls_back_to_synthetic_twin() {
    let (catalog, pu) = setup();
    let sql = "SELECT id, a, b FROM table_1";
    let (_, outcome) = rewrite_sql(sql, &catalog, &pu, &options(1.0, 1e-5));
    let rendered = render(&outcome.relation, &Dialect::generic()).unwrap();
    assert!(
        rendered.contains("synthetic_table_1"),
        "expected the synthetic twin, got: {rendered}"
    );
    assert_eq!(outcome.report.n_dp, 0);
}

#[test]
fn unbounded_column_errors_with_hint() {
    let (catalog, pu) = setup();
    // population is bounded in the catalog but cities is public; make an
    // unbounded private sum instead: id has no bounds.
    let sql = "SELECT sum(id) AS s FROM table_1";
    let rel = bind(&parse(sql).unwrap(), &catalog, Some(&pu)).unwrap();
    let err = rewrite(&rel, &catalog, &pu, &options(1.0, 1e-5)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("WHERE"), "error should advise a WHERE hint: {msg}");
    assert!(msg.contains("unbounded"), "error should name the problem: {msg}");
}

#[test]
fn data_derived_keys_are_thresholded() {
    let (catalog, pu) = setup();
    // id is unbounded, so grouping by it cannot be public.
    let sql = "SELECT id, sum(b) AS s FROM table_1 GROUP BY id";
    let (_, outcome) = rewrite_sql(sql, &catalog, &pu, &options(1.0, 0.1));
    let tau_rows: Vec<_> = outcome
        .report
        .mechanisms
        .iter()
        .filter(|m| m.kind == "tau-threshold")
        .collect();
    assert_eq!(tau_rows.len(), 1);
    assert!(tau_rows[0].tau.unwrap() > 1.0);
    assert!(outcome
        .events
        .iter()
        .any(|e| e.kind == EventKind::TauThreshold));
    // executes end to end
    let rendered = render(&outcome.relation, &Dialect::embedded()).unwrap();
    let mut conn = Connection::open_embedded(None, 11).unwrap();
    conn.load_fixture(&table_1_fixture()).unwrap();
    let out = conn.execute(&rendered).unwrap();
    // groups have one user each and tau >> 1: almost surely nothing released
    assert!(out.rows.len() <= 30);
}

#[test]
fn infeasible_target_names_blocking_node() {
    let catalog = Catalog::from_json(
        r#"{"tables": [{"name": "p", "columns": [{"name": "x", "type": "float"}],
             "visibility": "private"}]}"#,
    )
    .unwrap();
    let pu = PrivacyUnitDefinition::parse("[]", &catalog).unwrap();
    let rel = bind(&parse("SELECT x FROM p").unwrap(), &catalog, None).unwrap();
    let err = rewrite(&rel, &catalog, &pu, &options(1.0, 1e-5)).unwrap_err();
    assert!(matches!(err, qrw_core::Error::Infeasible(_)), "got {err}");
    assert!(err.to_string().contains("p"));
}

#[test]
fn rewritten_output_never_leaks_pid() {
    let (catalog, pu) = setup();
    for sql in [
        "SELECT a, count(*) AS n FROM table_1 WHERE a IN (1,2) GROUP BY a",
        "SELECT sum(total) AS t FROM orders",
    ] {
        let (_, outcome) = rewrite_sql(sql, &catalog, &pu, &options(1.0, 1e-4));
        for name in outcome.relation.schema().names() {
            assert!(!name.contains("_qrw_pid"), "PID column leaked: {name}");
        }
    }
}

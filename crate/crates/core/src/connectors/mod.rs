//! Execution backends: an embedded relational engine for fixtures and tests,
//! and a network client for an external SQL database.
//!
//! The network target is selected by a DSN, conventionally from the
//! `QRW_DSN` environment variable.

mod embedded;
mod network;

pub use embedded::EmbeddedConnection;
pub use network::NetworkConnection;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data_type::Value;
use crate::error::Result;
use crate::render::Dialect;

/// A table of result rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

/// A fixture table: schema kinds and rows, loaded verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    /// (column name, type name: boolean | integer | float | text)
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Value>>,
}

pub enum Connection {
    Embedded(EmbeddedConnection),
    Network(NetworkConnection),
}

impl Connection {
    /// In-memory (or file-backed) embedded engine with a seeded uniform
    /// random primitive, so statistical tests are reproducible.
    pub fn open_embedded(path: Option<&Path>, seed: u64) -> Result<Connection> {
        Ok(Connection::Embedded(EmbeddedConnection::open(path, seed)?))
    }

    pub fn open_network(dsn: &str) -> Result<Connection> {
        Ok(Connection::Network(NetworkConnection::connect(dsn)?))
    }

    pub fn dialect(&self) -> Dialect {
        match self {
            Connection::Embedded(_) => Dialect::embedded(),
            Connection::Network(_) => Dialect::postgres(),
        }
    }

    pub fn execute(&mut self, sql: &str) -> Result<ResultTable> {
        match self {
            Connection::Embedded(c) => c.execute(sql),
            Connection::Network(c) => c.execute(sql),
        }
    }

    pub fn load_fixture(&mut self, fixture: &Fixture) -> Result<()> {
        match self {
            Connection::Embedded(c) => c.load_fixture(fixture),
            Connection::Network(c) => c.load_fixture(fixture),
        }
    }
}

pub(crate) fn sql_literal(value: &Value) -> String {
    match value {
        Value::Null => "NULL".to_string(),
        Value::Boolean(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Fixture {
        Fixture {
            name: "nums".to_string(),
            columns: vec![
                ("id".to_string(), "integer".to_string()),
                ("x".to_string(), "float".to_string()),
                ("tag".to_string(), "text".to_string()),
            ],
            rows: (0..10)
                .map(|i| {
                    vec![
                        Value::Integer(i),
                        Value::Float(i as f64 / 2.0),
                        Value::Text(if i % 2 == 0 { "even" } else { "odd" }.to_string()),
                    ]
                })
                .collect(),
        }
    }

    #[test]
    fn select_one() {
        let mut conn = Connection::open_embedded(None, 0).unwrap();
        let out = conn.execute("SELECT 1").unwrap();
        assert_eq!(out.rows, vec![vec![Value::Integer(1)]]);
    }

    #[test]
    fn fixture_round_trip_and_count() {
        let mut conn = Connection::open_embedded(None, 0).unwrap();
        conn.load_fixture(&fixture()).unwrap();
        let out = conn.execute("SELECT count(*) FROM \"nums\"").unwrap();
        assert_eq!(out.rows, vec![vec![Value::Integer(10)]]);
        let out = conn
            .execute("SELECT \"tag\", count(*) AS n FROM \"nums\" GROUP BY \"tag\" ORDER BY \"tag\"")
            .unwrap();
        assert_eq!(out.columns, vec!["tag", "n"]);
        assert_eq!(
            out.rows,
            vec![
                vec![Value::Text("even".into()), Value::Integer(5)],
                vec![Value::Text("odd".into()), Value::Integer(5)],
            ]
        );
    }

    #[test]
    fn empty_fixture_loads() {
        let mut conn = Connection::open_embedded(None, 0).unwrap();
        let f = Fixture {
            name: "empty3".to_string(),
            columns: vec![
                ("a".to_string(), "integer".to_string()),
                ("b".to_string(), "float".to_string()),
                ("c".to_string(), "text".to_string()),
            ],
            rows: vec![],
        };
        conn.load_fixture(&f).unwrap();
        let out = conn.execute("SELECT count(*) FROM \"empty3\"").unwrap();
        assert_eq!(out.rows, vec![vec![Value::Integer(0)]]);
    }

    #[test]
    fn registered_math_and_seeded_uniform() {
        let mut conn = Connection::open_embedded(None, 42).unwrap();
        let out = conn
            .execute("SELECT LN(EXP(1.0)) + SQRT(4.0) + COS(0.0)")
            .unwrap();
        let Value::Float(v) = out.rows[0][0] else { panic!() };
        assert!((v - 4.0).abs() < 1e-12);
        // seeded uniform sequence is reproducible across connections
        let a = conn.execute("SELECT QRW_UNIFORM(), QRW_UNIFORM()").unwrap();
        let mut conn2 = Connection::open_embedded(None, 42).unwrap();
        let b = conn2.execute("SELECT QRW_UNIFORM(), QRW_UNIFORM()").unwrap();
        assert_eq!(a.rows, b.rows);
        assert_ne!(a.rows[0][0], a.rows[0][1]);
        // and draws land in [0, 1)
        for v in &a.rows[0] {
            let Value::Float(u) = v else { panic!() };
            assert!((0.0..1.0).contains(u));
        }
    }

    #[test]
    fn deterministic_for_noise_free_queries() {
        let run = || {
            let mut conn = Connection::open_embedded(None, 7).unwrap();
            conn.load_fixture(&fixture()).unwrap();
            conn.execute("SELECT sum(\"x\") FROM \"nums\" WHERE \"id\" < 5")
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}

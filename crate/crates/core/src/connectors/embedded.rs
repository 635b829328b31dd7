//! Embedded SQLite backend. Math functions and a seeded `qrw_uniform()` are
//! registered on every connection; the uniform function is volatile so the
//! engine evaluates it once per row.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::functions::FunctionFlags;
use rusqlite::types::ValueRef;
use rusqlite::Connection as SqliteConnection;

use crate::data_type::Value;
use crate::error::{Error, Result};

use super::{sql_literal, Fixture, ResultTable};

pub struct EmbeddedConnection {
    conn: SqliteConnection,
}

fn backend_err(e: rusqlite::Error) -> Error {
    Error::backend(e.to_string())
}

impl EmbeddedConnection {
    pub fn open(path: Option<&Path>, seed: u64) -> Result<EmbeddedConnection> {
        let conn = match path {
            Some(p) => SqliteConnection::open(p).map_err(backend_err)?,
            None => SqliteConnection::open_in_memory().map_err(backend_err)?,
        };
        register_functions(&conn, seed)?;
        Ok(EmbeddedConnection { conn })
    }

    pub fn execute(&mut self, sql: &str) -> Result<ResultTable> {
        let mut stmt = self
            .conn
            .prepare_cached(sql)
            .map_err(|e| Error::backend(format!("{e} in statement: {sql}")))?;
        let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
        let n = columns.len();
        let mut rows = Vec::new();
        let mut query = stmt.query([]).map_err(backend_err)?;
        while let Some(row) = query.next().map_err(backend_err)? {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let v = match row.get_ref(i).map_err(backend_err)? {
                    ValueRef::Null => Value::Null,
                    ValueRef::Integer(i) => Value::Integer(i),
                    ValueRef::Real(f) => Value::Float(f),
                    ValueRef::Text(t) => Value::Text(
                        String::from_utf8_lossy(t).into_owned(),
                    ),
                    ValueRef::Blob(_) => {
                        return Err(Error::backend("blob columns are not supported"))
                    }
                };
                out.push(v);
            }
            rows.push(out);
        }
        Ok(ResultTable { columns, rows })
    }

    pub fn load_fixture(&mut self, fixture: &Fixture) -> Result<()> {
        let cols: Vec<String> = fixture
            .columns
            .iter()
            .map(|(name, kind)| {
                let ty = match kind.as_str() {
                    "integer" | "boolean" => "INTEGER",
                    "float" => "REAL",
                    "text" => "TEXT",
                    other => other,
                };
                format!("\"{name}\" {ty}")
            })
            .collect();
        self.conn
            .execute_batch(&format!(
                "DROP TABLE IF EXISTS \"{0}\"; CREATE TABLE \"{0}\" ({1});",
                fixture.name,
                cols.join(", ")
            ))
            .map_err(backend_err)?;
        if fixture.rows.is_empty() {
            return Ok(());
        }
        let tx = self.conn.transaction().map_err(backend_err)?;
        for chunk in fixture.rows.chunks(256) {
            let values: Vec<String> = chunk
                .iter()
                .map(|row| {
                    let lits: Vec<String> = row.iter().map(sql_literal).collect();
                    format!("({})", lits.join(", "))
                })
                .collect();
            tx.execute_batch(&format!(
                "INSERT INTO \"{}\" VALUES {};",
                fixture.name,
                values.join(", ")
            ))
            .map_err(backend_err)?;
        }
        tx.commit().map_err(backend_err)?;
        Ok(())
    }
}

fn register_functions(conn: &SqliteConnection, seed: u64) -> Result<()> {
    let det = FunctionFlags::SQLITE_UTF8 | FunctionFlags::SQLITE_DETERMINISTIC;
    let unary = |name: &str, f: fn(f64) -> f64| -> rusqlite::Result<()> {
        conn.create_scalar_function(name, 1, det, move |ctx| {
            let x: Option<f64> = ctx.get(0)?;
            Ok(x.map(|x| {
                let y = f(x);
                if y.is_finite() {
                    Some(y)
                } else {
                    None
                }
            })
            .flatten())
        })
    };
    unary("ln", f64::ln).map_err(backend_err)?;
    unary("exp", f64::exp).map_err(backend_err)?;
    unary("sqrt", f64::sqrt).map_err(backend_err)?;
    unary("sin", f64::sin).map_err(backend_err)?;
    unary("cos", f64::cos).map_err(backend_err)?;
    // Volatile (no DETERMINISTIC flag): one fresh draw per evaluation.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    conn.create_scalar_function("qrw_uniform", 0, FunctionFlags::SQLITE_UTF8, move |_| {
        Ok(rng.gen::<f64>())
    })
    .map_err(backend_err)?;
    Ok(())
}

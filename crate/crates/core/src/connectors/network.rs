//! Network backend: a PostgreSQL client addressed by DSN.

use postgres::types::Type;
use postgres::{Client, NoTls};

use crate::data_type::Value;
use crate::error::{Error, Result};

use super::{sql_literal, Fixture, ResultTable};

pub struct NetworkConnection {
    client: Client,
}

fn backend_err(e: postgres::Error) -> Error {
    Error::backend(e.to_string())
}

impl NetworkConnection {
    pub fn connect(dsn: &str) -> Result<NetworkConnection> {
        let client = Client::connect(dsn, NoTls).map_err(backend_err)?;
        Ok(NetworkConnection { client })
    }

    pub fn execute(&mut self, sql: &str) -> Result<ResultTable> {
        let rows = self
            .client
            .query(sql, &[])
            .map_err(|e| Error::backend(format!("{e} in statement: {sql}")))?;
        let columns: Vec<String> = rows
            .first()
            .map(|r| r.columns().iter().map(|c| c.name().to_string()).collect())
            .unwrap_or_default();
        let mut out = Vec::with_capacity(rows.len());
        for row in &rows {
            let mut vals = Vec::with_capacity(row.columns().len());
            for (i, col) in row.columns().iter().enumerate() {
                let v = match *col.type_() {
                    Type::BOOL => row
                        .get::<_, Option<bool>>(i)
                        .map_or(Value::Null, Value::Boolean),
                    Type::INT2 => row
                        .get::<_, Option<i16>>(i)
                        .map_or(Value::Null, |v| Value::Integer(v as i64)),
                    Type::INT4 => row
                        .get::<_, Option<i32>>(i)
                        .map_or(Value::Null, |v| Value::Integer(v as i64)),
                    Type::INT8 => row
                        .get::<_, Option<i64>>(i)
                        .map_or(Value::Null, Value::Integer),
                    Type::FLOAT4 => row
                        .get::<_, Option<f32>>(i)
                        .map_or(Value::Null, |v| Value::Float(v as f64)),
                    Type::FLOAT8 => row
                        .get::<_, Option<f64>>(i)
                        .map_or(Value::Null, Value::Float),
                    Type::TEXT | Type::VARCHAR | Type::BPCHAR | Type::NAME => row
                        .get::<_, Option<String>>(i)
                        .map_or(Value::Null, Value::Text),
                    ref other => {
                        return Err(Error::backend(format!(
                            "unsupported result column type {other} for {:?}",
                            col.name()
                        )))
                    }
                };
                vals.push(v);
            }
            out.push(vals);
        }
        Ok(ResultTable { columns, rows: out })
    }

    pub fn load_fixture(&mut self, fixture: &Fixture) -> Result<()> {
        let cols: Vec<String> = fixture
            .columns
            .iter()
            .map(|(name, kind)| {
                let ty = match kind.as_str() {
                    "integer" => "BIGINT",
                    "boolean" => "BOOLEAN",
                    "float" => "DOUBLE PRECISION",
                    "text" => "TEXT",
                    other => other,
                };
                format!("\"{name}\" {ty}")
            })
            .collect();
        self.client
            .batch_execute(&format!(
                "DROP TABLE IF EXISTS \"{0}\"; CREATE TABLE \"{0}\" ({1});",
                fixture.name,
                cols.join(", ")
            ))
            .map_err(backend_err)?;
        for chunk in fixture.rows.chunks(256) {
            if chunk.is_empty() {
                continue;
            }
            let values: Vec<String> = chunk
                .iter()
                .map(|row| {
                    let lits: Vec<String> = row.iter().map(sql_literal).collect();
                    format!("({})", lits.join(", "))
                })
                .collect();
            self.client
                .batch_execute(&format!(
                    "INSERT INTO \"{}\" VALUES {};",
                    fixture.name,
                    values.join(", ")
                ))
                .map_err(backend_err)?;
        }
        Ok(())
    }
}

//! Dialect adapters: how each target engine spells the primitives the
//! generated SQL relies on.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialect {
    pub name: &'static str,
    /// SQL expression producing a uniform draw in [0, 1); `None` means the
    /// dialect has no such primitive and noisy queries cannot be rendered.
    pub uniform_random: Option<&'static str>,
    pub natural_log: &'static str,
    pub square_root: &'static str,
    pub greatest: &'static str,
    pub least: &'static str,
    pub cast_text: &'static str,
    pub cast_integer: &'static str,
    pub cast_float: &'static str,
    /// Whether `WITH x AS MATERIALIZED (...)` is understood. Nodes carrying
    /// fresh randomness are materialized so the engine evaluates each draw
    /// once per output row even when the CTE is referenced more than once.
    pub materialized_cte: bool,
}

impl Dialect {
    pub fn generic() -> Dialect {
        Dialect {
            name: "generic",
            uniform_random: Some("RANDOM()"),
            natural_log: "LN",
            square_root: "SQRT",
            greatest: "GREATEST",
            least: "LEAST",
            cast_text: "TEXT",
            cast_integer: "BIGINT",
            cast_float: "DOUBLE PRECISION",
            materialized_cte: false,
        }
    }

    pub fn postgres() -> Dialect {
        Dialect {
            name: "postgres",
            uniform_random: Some("RANDOM()"),
            natural_log: "LN",
            square_root: "SQRT",
            greatest: "GREATEST",
            least: "LEAST",
            cast_text: "TEXT",
            cast_integer: "BIGINT",
            cast_float: "DOUBLE PRECISION",
            materialized_cte: true,
        }
    }

    /// The embedded test backend: SQLite with ln/exp/sqrt/sin/cos and a
    /// seeded `qrw_uniform()` registered on every connection.
    pub fn embedded() -> Dialect {
        Dialect {
            name: "embedded",
            uniform_random: Some("QRW_UNIFORM()"),
            natural_log: "LN",
            square_root: "SQRT",
            greatest: "MAX",
            least: "MIN",
            cast_text: "TEXT",
            cast_integer: "INTEGER",
            cast_float: "REAL",
            materialized_cte: true,
        }
    }

    pub fn by_name(name: &str) -> Result<Dialect> {
        match name {
            "generic" => Ok(Dialect::generic()),
            "postgres" => Ok(Dialect::postgres()),
            "embedded" => Ok(Dialect::embedded()),
            other => Err(Error::invalid(format!(
                "unknown dialect {other:?} (expected generic, postgres or embedded)"
            ))),
        }
    }
}

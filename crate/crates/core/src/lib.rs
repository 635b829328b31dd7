//! SQL-to-SQL differential privacy compiler.
//!
//! Queries are parsed into a normalized relational dataflow IR that tracks
//! value ranges and privacy-unit ownership, rewritten into a differentially
//! private equivalent, and rendered back to standard SQL for execution on any
//! relational engine. Privacy loss is recorded and composed by an RDP
//! accountant.

pub mod accountant;
pub mod catalog;
pub mod connectors;
pub mod data_type;
pub mod dot;
pub mod dp;
pub mod dp_eval;
pub mod error;
pub mod expr;
pub mod frontend;
pub mod interval;
pub mod monotone;
pub mod privacy_unit;
pub mod range;
pub mod relation;
pub mod render;
pub mod report;
pub mod rewriting;
pub mod schema;
mod stable_hash;

pub use catalog::Catalog;
pub use data_type::{DataType, Value};
pub use error::{Error, Result};
pub use expr::{AggOp, Aggregate, Expr, Function};
pub use interval::KInterval;
pub use relation::{Relation, Visibility};
pub use schema::{Field, Schema};

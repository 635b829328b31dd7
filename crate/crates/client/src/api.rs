//! Wire types of the rewriting service.

use serde::{Deserialize, Serialize};

use qrw_core::accountant::ComposedLoss;
use qrw_core::connectors::ResultTable;
use qrw_core::report::RewriteReport;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
}

fn default_target() -> String {
    "pubd".to_string()
}

fn default_dialect() -> String {
    "generic".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub query: String,
    /// Catalog document, as accepted by the catalog JSON schema.
    pub catalog: serde_json::Value,
    /// Privacy unit definition document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy_unit: Option<serde_json::Value>,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_dialect")]
    pub dialect: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_multiplier: Option<f64>,
    /// Accountant session; events accumulate in the session ledger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    /// Set to false to skip ledger persistence (dry runs).
    #[serde(default = "default_true")]
    pub account: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewriteResponse {
    pub sql: String,
    pub report: RewriteReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InspectRequest {
    pub query: String,
    pub catalog: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy_unit: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnView {
    pub column: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeView {
    pub name: String,
    pub variant: String,
    pub schema: Vec<ColumnView>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InspectResponse {
    pub nodes: Vec<NodeView>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DotResponse {
    pub dot: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    /// The embedded engine; `db` is a file path, in-memory when absent.
    Embedded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        db: Option<String>,
        #[serde(default)]
        seed: u64,
    },
    /// External database by connection string.
    Dsn { dsn: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(flatten)]
    pub rewrite: RewriteRequest,
    pub backend: BackendSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResponse {
    pub result: ResultTable,
    pub report: RewriteReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DpEvalRequest {
    /// Query over the generated fixture table (columns: user_id, x, g).
    pub query: String,
    pub epsilon: f64,
    pub delta: f64,
    /// 1: one row per user; 2: normal per-user row counts.
    #[serde(default = "default_scenario")]
    pub scenario: u8,
    #[serde(default = "default_users")]
    pub users: usize,
    /// Target table size for scenario 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_size: Option<usize>,
    #[serde(default = "default_groups")]
    pub groups: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_adjacent")]
    pub max_adjacent: usize,
    /// Fixture table name used in the query.
    #[serde(default = "default_table")]
    pub table: String,
}

fn default_scenario() -> u8 {
    1
}
fn default_users() -> usize {
    100
}
fn default_groups() -> usize {
    3
}
fn default_runs() -> usize {
    2000
}
fn default_max_adjacent() -> usize {
    10
}
fn default_table() -> String {
    "halton".to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session: String,
    pub events: usize,
    pub composed: ComposedLoss,
}

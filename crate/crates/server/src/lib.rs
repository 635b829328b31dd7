//! HTTP/JSON service exposing the rewriting pipeline: rewrite, inspect, dot
//! export, execution against a backend, empirical DP evaluation, and
//! per-session privacy-loss accounting.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use qrw_client::api::*;
use qrw_core::accountant::{compose_events, Accountant, MechanismEvent};
use qrw_core::connectors::{Connection, Fixture};
use qrw_core::dp_eval::{
    build_halton_fixture, estimate_privacy_profile, HaltonFixtureParams, ProfileParams,
    RowsPerUser,
};
use qrw_core::frontend::{bind, parse};
use qrw_core::privacy_unit::PrivacyUnitDefinition;
use qrw_core::relation::propagate;
use qrw_core::render::{render, Dialect};
use qrw_core::rewriting::{rewrite, Budget, Property, RewriteOptions, RewriteOutcome};
use qrw_core::{Catalog, Error};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    /// Directory holding one JSONL ledger per session; in-memory accountants
    /// are used when absent.
    ledger_dir: Option<PathBuf>,
    /// Serializes ledger writers (single-writer contract) and holds
    /// in-memory session accountants.
    sessions: Mutex<HashMap<String, Vec<MechanismEvent>>>,
}

impl AppState {
    pub fn new(ledger_dir: Option<PathBuf>) -> AppState {
        AppState {
            inner: Arc::new(Inner { ledger_dir, sessions: Mutex::new(HashMap::new()) }),
        }
    }
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind() {
            "parse" | "unsupported" | "bind" | "invalid" => StatusCode::BAD_REQUEST,
            "rewriting" | "infeasible" => StatusCode::UNPROCESSABLE_ENTITY,
            "backend" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody { kind: self.0.kind().to_string(), error: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        ApiError(e)
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/rewrite", post(handle_rewrite))
        .route("/inspect", post(handle_inspect))
        .route("/dot", post(handle_dot))
        .route("/run", post(handle_run))
        .route("/dp-eval", post(handle_dp_eval))
        .route("/session/:id", get(handle_session))
        .with_state(state)
}

/// Bind to the address and serve until shutdown. Returns the bound address
/// (useful with port 0).
pub async fn serve(
    addr: SocketAddr,
    state: AppState,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let app = router(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server terminated: {e}");
        }
    });
    Ok((bound, handle))
}

fn parse_catalog(value: &serde_json::Value) -> Result<Catalog, Error> {
    Catalog::from_json(&value.to_string())
}

fn parse_pu(
    value: &Option<serde_json::Value>,
    catalog: &Catalog,
) -> Result<PrivacyUnitDefinition, Error> {
    match value {
        Some(v) => PrivacyUnitDefinition::parse(&v.to_string(), catalog),
        None => Ok(PrivacyUnitDefinition::new(vec![])),
    }
}

struct Rewritten {
    outcome: RewriteOutcome,
    sql: String,
}

fn do_rewrite(state: &AppState, req: &RewriteRequest) -> Result<Rewritten, Error> {
    let catalog = parse_catalog(&req.catalog)?;
    let pu = parse_pu(&req.privacy_unit, &catalog)?;
    let ast = parse(&req.query)?;
    let relation = bind(&ast, &catalog, Some(&pu))?;
    let mut options = RewriteOptions::new(
        Property::parse(&req.target)?,
        Budget::new(req.epsilon, req.delta)?,
    );
    if let Some(k) = req.clip_multiplier {
        if !(k > 0.0) {
            return Err(Error::invalid("clip multiplier must be positive"));
        }
        options.clip_multiplier = k;
    }
    options.query_id = req
        .query_id
        .clone()
        .unwrap_or_else(|| format!("q{:08x}", seahash(&req.query)));
    let dialect = Dialect::by_name(&req.dialect)?;
    let mut outcome = rewrite(&relation, &catalog, &pu, &options)?;
    let sql = render(&outcome.relation, &dialect)?;

    outcome.report.composed = Some(compose_events(&outcome.events)?);
    if let Some(session) = &req.session {
        if req.account {
            let mut sessions = state.inner.sessions.lock().expect("sessions lock");
            match &state.inner.ledger_dir {
                Some(dir) => {
                    let mut acc = Accountant::open(dir.join(format!("{session}.jsonl")))?;
                    for e in &outcome.events {
                        acc.record(e.clone())?;
                    }
                    outcome.report.session = Some(compose_events(acc.events())?);
                    // Mirror in memory so GET /session works without re-reading.
                    sessions.insert(session.clone(), acc.events().to_vec());
                }
                None => {
                    let events = sessions.entry(session.clone()).or_default();
                    events.extend(outcome.events.iter().cloned());
                    outcome.report.session = Some(compose_events(events)?);
                }
            }
        }
    }
    Ok(Rewritten { sql, outcome })
}

fn seahash(s: &str) -> u32 {
    // Small stable hash for default query ids.
    let mut h: u32 = 2166136261;
    for b in s.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(16777619);
    }
    h
}

async fn handle_rewrite(
    State(state): State<AppState>,
    Json(req): Json<RewriteRequest>,
) -> ApiResult<RewriteResponse> {
    let rewritten = do_rewrite(&state, &req)?;
    Ok(Json(RewriteResponse { sql: rewritten.sql, report: rewritten.outcome.report }))
}

async fn handle_inspect(
    State(_): State<AppState>,
    Json(req): Json<InspectRequest>,
) -> ApiResult<InspectResponse> {
    let catalog = parse_catalog(&req.catalog)?;
    let pu = match &req.privacy_unit {
        Some(v) => Some(PrivacyUnitDefinition::parse(&v.to_string(), &catalog)?),
        None => None,
    };
    let ast = parse(&req.query)?;
    let relation = bind(&ast, &catalog, pu.as_ref())?;
    let nodes = propagate(&relation)
        .into_iter()
        .map(|(node, schema)| NodeView {
            name: node.name().to_string(),
            variant: node.variant_name().to_string(),
            schema: schema
                .fields()
                .iter()
                .map(|f| ColumnView {
                    column: f.name.clone(),
                    type_name: f.data_type.to_string(),
                })
                .collect(),
        })
        .collect();
    Ok(Json(InspectResponse { nodes }))
}

async fn handle_dot(
    State(_): State<AppState>,
    Json(req): Json<InspectRequest>,
) -> ApiResult<DotResponse> {
    let catalog = parse_catalog(&req.catalog)?;
    let pu = match &req.privacy_unit {
        Some(v) => Some(PrivacyUnitDefinition::parse(&v.to_string(), &catalog)?),
        None => None,
    };
    let ast = parse(&req.query)?;
    let relation = bind(&ast, &catalog, pu.as_ref())?;
    Ok(Json(DotResponse { dot: qrw_core::dot::to_dot(&relation) }))
}

async fn handle_run(
    State(state): State<AppState>,
    Json(req): Json<RunRequest>,
) -> ApiResult<RunResponse> {
    // Rewriting itself never contacts the backend; only execution does.
    let mut rewrite_req = req.rewrite.clone();
    rewrite_req.dialect = match &req.backend {
        BackendSpec::Embedded { .. } => "embedded".to_string(),
        BackendSpec::Dsn { .. } => "postgres".to_string(),
    };
    let rewritten = do_rewrite(&state, &rewrite_req)?;
    let result = tokio::task::spawn_blocking(move || -> Result<_, Error> {
        let mut conn = match &req.backend {
            BackendSpec::Embedded { db, seed } => {
                Connection::open_embedded(db.as_deref().map(std::path::Path::new), *seed)?
            }
            BackendSpec::Dsn { dsn } => Connection::open_network(dsn)?,
        };
        conn.execute(&rewritten.sql)
    })
    .await
    .map_err(|e| Error::backend(format!("execution task failed: {e}")))??;
    Ok(Json(RunResponse { result, report: rewritten.outcome.report }))
}

async fn handle_dp_eval(
    State(_): State<AppState>,
    Json(req): Json<DpEvalRequest>,
) -> ApiResult<qrw_core::dp_eval::PrivacyProfile> {
    let profile = tokio::task::spawn_blocking(move || -> Result<_, Error> {
        let fixture = build_halton_fixture(&HaltonFixtureParams {
            table_name: req.table.clone(),
            n_users: req.users,
            rows_per_user: match req.scenario {
                1 => RowsPerUser::ExactlyOne,
                2 => RowsPerUser::NormalAroundHalfTable {
                    table_size: req.table_size.unwrap_or(req.users),
                },
                other => return Err(Error::invalid(format!("unknown scenario {other}"))),
            },
            n_groups: req.groups,
            offset: 0,
            seed: req.seed,
        })?;
        let (sql, key_columns) = rewrite_eval_query(&req, &fixture)?;
        let params = ProfileParams {
            runs: req.runs,
            eps_grid: req
                .eps
                .clone()
                .unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]),
            confidence: 0.95,
            seed: req.seed,
            max_adjacent: req.max_adjacent,
        };
        estimate_privacy_profile(&sql, &fixture, "user_id", key_columns, &params)
    })
    .await
    .map_err(|e| Error::backend(format!("evaluation task failed: {e}")))??;
    Ok(Json(profile))
}

/// Build the catalog and privacy unit for the generated fixture, rewrite the
/// query once (sigma and tau stay fixed across runs) and render it for the
/// embedded engine.
fn rewrite_eval_query(req: &DpEvalRequest, fixture: &Fixture) -> Result<(String, usize), Error> {
    let catalog_doc = serde_json::json!({
        "tables": [{
            "name": fixture.name,
            "columns": [
                {"name": "user_id", "type": "integer"},
                {"name": "x", "type": "float", "min": 0.0, "max": 1.0},
                {"name": "g", "type": "integer", "min": 1, "max": req.groups}
            ],
            "visibility": "private"
        }]
    });
    let catalog = Catalog::from_json(&catalog_doc.to_string())?;
    let pu_doc = serde_json::json!([
        {"table": fixture.name, "path": [], "pid": "user_id"}
    ]);
    let pu = PrivacyUnitDefinition::parse(&pu_doc.to_string(), &catalog)?;
    let ast = parse(&req.query)?;
    let relation = bind(&ast, &catalog, Some(&pu))?;
    let mut options = RewriteOptions::new(
        Property::Pubd,
        Budget::new(req.epsilon, req.delta)?,
    );
    options.query_id = "dp-eval".to_string();
    let outcome = rewrite(&relation, &catalog, &pu, &options)?;
    let sql = render(&outcome.relation, &Dialect::embedded())?;
    let key_columns = relation.schema().len() - 1;
    Ok((sql, key_columns))
}

#[derive(Deserialize)]
struct SessionQuery {
    delta: Option<f64>,
}

async fn handle_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SessionQuery>,
) -> ApiResult<SessionResponse> {
    let events: Vec<MechanismEvent> = match &state.inner.ledger_dir {
        Some(dir) => {
            let acc = Accountant::open(dir.join(format!("{id}.jsonl")))?;
            acc.events().to_vec()
        }
        None => state
            .inner
            .sessions
            .lock()
            .expect("sessions lock")
            .get(&id)
            .cloned()
            .unwrap_or_default(),
    };
    let composed = match q.delta {
        Some(delta) => {
            let mut acc = Accountant::in_memory();
            for e in &events {
                acc.record(e.clone())?;
            }
            acc.compose(delta)?
        }
        None => compose_events(&events)?,
    };
    Ok(Json(SessionResponse { session: id, events: events.len(), composed }))
}

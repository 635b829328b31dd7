//! Command-line entry point. All commands go through the rewriting service:
//! either a remote one (`--server`) or one spawned in-process on an
//! ephemeral port.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrw_client::api::*;
use qrw_client::{Client, ClientError};

#[derive(Parser)]
#[command(name = "qrw", version, about = "Compile SQL into differentially private SQL")]
struct Cli {
    /// URL of a running qrwd service; when absent one is spawned in-process.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Directory for per-session accountant ledgers (in-process service).
    #[arg(long, global = true, default_value = ".qrw/ledger")]
    ledger_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a query into its differentially private equivalent.
    Rewrite {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: BudgetFlags,
    },
    /// Show every node's schema with propagated ranges.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Machine-readable output.
        #[arg(long)]
        json: bool,
    },
    /// Export the relation graph in dot format.
    Dot {
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite, execute on a backend, and print the rows.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: BudgetFlags,
        /// Execution backend.
        #[arg(long, default_value = "embedded", value_parser = ["embedded", "dsn"])]
        backend: String,
        /// Database file for the embedded backend (in-memory when absent).
        #[arg(long)]
        db: Option<String>,
        /// Seed for the embedded backend's random primitive.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate an empirical privacy profile on generated fixtures.
    DpEval {
        /// JSON evaluation spec (query, budget, scenario, users, runs, ...).
        spec: PathBuf,
        /// Emit CSV instead of JSON.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct Common {
    /// SQL query text.
    query: String,
    /// Catalog JSON document.
    #[arg(long)]
    catalog: PathBuf,
    /// Privacy unit definition JSON document.
    #[arg(long)]
    privacy_unit: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetFlags {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    /// Desired output property.
    #[arg(long, default_value = "pubd", value_parser = ["pub", "pubd"])]
    target: String,
    #[arg(long, default_value = "generic", value_parser = ["generic", "postgres", "embedded"])]
    dialect: String,
    /// Clipping multiplier (trades noise for bias).
    #[arg(long)]
    clip_multiplier: Option<f64>,
    /// Accountant session; loss accumulates across invocations.
    #[arg(long)]
    session: Option<String>,
    /// Skip ledger persistence for this invocation.
    #[arg(long)]
    no_account: bool,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

fn exit_code_for(kind: &str) -> u8 {
    match kind {
        "parse" | "unsupported" => 2,
        "bind" => 3,
        "rewriting" | "infeasible" => 4,
        "backend" => 5,
        _ => 1,
    }
}

fn read_json(path: &PathBuf) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{} is not valid JSON: {e}", path.display()))
}

fn rewrite_request(common: &Common, budget: &BudgetFlags) -> Result<RewriteRequest, String> {
    Ok(RewriteRequest {
        query: common.query.clone(),
        catalog: read_json(&common.catalog)?,
        privacy_unit: common.privacy_unit.as_ref().map(read_json).transpose()?,
        epsilon: budget.epsilon,
        delta: budget.delta,
        target: budget.target.clone(),
        dialect: budget.dialect.clone(),
        clip_multiplier: budget.clip_multiplier,
        session: budget.session.clone(),
        account: !budget.no_account,
        query_id: None,
    })
}

async fn connect(cli: &Cli) -> Result<Client, String> {
    match &cli.server {
        Some(url) => Ok(Client::new(url.clone())),
        None => {
            let state = qrw_server::AppState::new(Some(cli.ledger_dir.clone()));
            let (addr, _handle) = qrw_server::serve("127.0.0.1:0".parse().unwrap(), state)
                .await
                .map_err(|e| format!("cannot start in-process service: {e}"))?;
            Ok(Client::new(format!("http://{addr}")))
        }
    }
}

async fn dispatch(cli: &Cli) -> Result<(), ClientError> {
    let client = connect(cli).await.map_err(|e| ClientError::Service {
        kind: "invalid".to_string(),
        message: e,
    })?;
    let invalid = |message: String| ClientError::Service { kind: "invalid".to_string(), message };
    match &cli.command {
        Command::Rewrite { common, budget } => {
            let req = rewrite_request(common, budget).map_err(invalid)?;
            let resp = client.rewrite(&req).await?;
            if budget.json {
                println!("{}", serde_json::to_string_pretty(&resp).expect("serializable"));
            } else {
                println!("{}", resp.sql);
                println!();
                print!("{}", resp.report);
            }
        }
        Command::Inspect { common, json } => {
            let req = InspectRequest {
                query: common.query.clone(),
                catalog: read_json(&common.catalog).map_err(invalid)?,
                privacy_unit: common
                    .privacy_unit
                    .as_ref()
                    .map(read_json)
                    .transpose()
                    .map_err(invalid)?,
            };
            let resp = client.inspect(&req).await?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&resp).expect("serializable"));
            } else {
                for node in &resp.nodes {
                    println!("{} {}", node.variant, node.name);
                    for col in &node.schema {
                        println!("  {}: {}", col.column, col.type_name);
                    }
                }
            }
        }
        Command::Dot { common } => {
            let req = InspectRequest {
                query: common.query.clone(),
                catalog: read_json(&common.catalog).map_err(invalid)?,
                privacy_unit: common
                    .privacy_unit
                    .as_ref()
                    .map(read_json)
                    .transpose()
                    .map_err(invalid)?,
            };
            let resp = client.dot(&req).await?;
            print!("{}", resp.dot);
        }
        Command::Run { common, budget, backend, db, seed } => {
            let rewrite = rewrite_request(common, budget).map_err(invalid)?;
            let backend = match backend.as_str() {
                "embedded" => BackendSpec::Embedded { db: db.clone(), seed: *seed },
                _ => {
                    let dsn = std::env::var("QRW_DSN").map_err(|_| {
                        invalid("backend dsn requires the QRW_DSN environment variable".into())
                    })?;
                    BackendSpec::Dsn { dsn }
                }
            };
            let resp = client.run(&RunRequest { rewrite, backend }).await?;
            if budget.json {
                println!("{}", serde_json::to_string_pretty(&resp).expect("serializable"));
            } else {
                println!("{}", resp.result.columns.join("\t"));
                for row in &resp.result.rows {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    println!("{}", cells.join("\t"));
                }
            }
        }
        Command::DpEval { spec, csv } => {
            let text = std::fs::read_to_string(spec)
                .map_err(|e| invalid(format!("cannot read {}: {e}", spec.display())))?;
            let req: DpEvalRequest = serde_json::from_str(&text)
                .map_err(|e| invalid(format!("bad evaluation spec: {e}")))?;
            let profile = client.dp_eval(&req).await?;
            if *csv {
                print!("{}", profile.to_csv());
            } else {
                println!("{}", serde_json::to_string_pretty(&profile).expect("serializable"));
            }
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(e.kind()))
        }
    }
}

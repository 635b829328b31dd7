use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;

use qrw_server::{serve, AppState};

/// The qrw rewriting service.
#[derive(Parser)]
#[command(name = "qrwd", version, about)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8341")]
    addr: SocketAddr,
    /// Directory for per-session accountant ledgers (JSONL). Sessions are
    /// kept in memory when not set.
    #[arg(long)]
    ledger_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "qrwd=info,qrw_server=info".into()),
        )
        .init();
    let args = Args::parse();
    let state = AppState::new(args.ledger_dir);
    let (bound, handle) = serve(args.addr, state).await?;
    tracing::info!("listening on {bound}");
    tokio::select! {
        _ = handle => {}
        _ = tokio::signal::ctrl_c() => {
            tracing::info!("shutting down");
        }
    }
    Ok(())
}

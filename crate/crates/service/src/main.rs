use std::path::PathBuf;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use jam_service::{router, AppState, ServiceConfig};

/// Session service for the Just a Minute game.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Service config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's listen address.
    #[arg(long)]
    bind: Option<String>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    let bind = config.bind.clone();
    let state = AppState::open(config)?;
    state.spawn_background();
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use coldfaas_core::driver::SimMode;
use coldfaas_server::PlatformConfig;
use tokio::signal::unix::{signal, SignalKind};
use tracing_subscriber::EnvFilter;

/// Serve the coldfaas gateway.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<SocketAddr>,
    #[arg(long)]
    workers: Option<usize>,
    /// Bound on queued requests; unbounded if unset.
    #[arg(long)]
    queue_capacity: Option<usize>,
    /// Runtime profile JSON file.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    registry_dir: Option<PathBuf>,
    #[arg(long)]
    max_body_bytes: Option<usize>,
    /// Close connections after each response.
    #[arg(long)]
    no_keep_alive: bool,
    /// Report sampled latency without sleeping for it.
    #[arg(long)]
    virtual_time: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    idle_timeout_ms: Option<u64>,
}

impl Args {
    fn into_config(self) -> anyhow::Result<PlatformConfig> {
        let mut c = match &self.config {
            Some(path) => PlatformConfig::load(path)?,
            None => PlatformConfig::default(),
        };
        if let Some(v) = self.listen {
            c.gateway.listen = v;
        }
        if let Some(v) = self.workers {
            c.dispatcher.workers = v;
        }
        if self.queue_capacity.is_some() {
            c.dispatcher.queue_capacity = self.queue_capacity;
        }
        if self.profiles.is_some() {
            c.drivers.profiles = self.profiles;
        }
        if let Some(v) = self.registry_dir {
            c.drivers.registry_dir = v;
        }
        if let Some(v) = self.max_body_bytes {
            c.gateway.max_body_bytes = v;
        }
        if self.no_keep_alive {
            c.gateway.keep_alive = false;
        }
        if self.virtual_time {
            c.drivers.simulated_mode = SimMode::Virtual;
        }
        if let Some(v) = self.seed {
            c.drivers.seed = v;
        }
        if let Some(v) = self.idle_timeout_ms {
            c.warm_pool.idle_timeout_ms = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let config = Args::parse().into_config()?;
    let server = coldfaas_server::spawn(config)
        .await
        .context("starting gateway")?;
    println!("listening on {}", server.url());
    let mut term = signal(SignalKind::terminate()).context("installing SIGTERM handler")?;
    tokio::select! {
        r = tokio::signal::ctrl_c() => r.context("waiting for ctrl-c")?,
        _ = term.recv() => {}
    }
    server.shutdown().await;
    Ok(())
}

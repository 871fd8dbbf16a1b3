mod analyze;
mod bench;
mod remote;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coldfaas_core::stats::ExportFormat;
use coldfaas_core::{ConnectionMode, HttpMethod};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "coldfaas",
    version,
    about = "Benchmark and manage a coldfaas gateway"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop benchmark and write its samples.
    Bench(bench::BenchArgs),
    /// Run a benchmark at several parallelism levels.
    Sweep(bench::SweepArgs),
    /// Summarize sample files.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ExportFormat,
        /// Output file; stdout if unset.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate several runs and check ordering assertions.
    Compare {
        /// Sample or report files; each is named by its file stem.
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// e.g. "a.p50 < b.p50"; exits 1 if any fails.
        #[arg(long = "assert")]
        assertions: Vec<String>,
    },
    /// Deploy a function from a JSON spec and optional executable.
    Deploy {
        #[command(flatten)]
        gateway: Gateway,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Invoke a function once; output goes to stdout, timing to stderr.
    Invoke {
        #[command(flatten)]
        gateway: Gateway,
        name: String,
        #[command(flatten)]
        payload: Payload,
    },
    /// Print dispatcher statistics.
    Stats {
        #[command(flatten)]
        gateway: Gateway,
    },
    /// Print the warm-pool waste ledger.
    Waste {
        #[command(flatten)]
        gateway: Gateway,
    },
    /// Print image sizes of deployed functions.
    Sizes {
        #[command(flatten)]
        gateway: Gateway,
    },
}

#[derive(Debug, Clone, Args)]
struct Gateway {
    /// Gateway root URL.
    #[arg(long, env = "COLDFAAS_URL", default_value = "http://127.0.0.1:8080")]
    gateway: String,
}

#[derive(Debug, Clone, Args)]
struct Payload {
    /// Request body.
    #[arg(long, conflicts_with = "data_file")]
    data: Option<String>,
    #[arg(long)]
    data_file: Option<PathBuf>,
}

impl Payload {
    fn bytes(&self) -> anyhow::Result<Vec<u8>> {
        Ok(match (&self.data, &self.data_file) {
            (Some(s), _) => s.clone().into_bytes(),
            (None, Some(path)) => {
                std::fs::read(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
            }
            (None, None) => Vec::new(),
        })
    }
}

fn parse_mode(s: &str) -> Result<ConnectionMode, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<HttpMethod, String> {
    match s.to_ascii_lowercase().as_str() {
        "get" => Ok(HttpMethod::Get),
        "post" => Ok(HttpMethod::Post),
        other => Err(format!("unsupported method {other:?}")),
    }
}

/// Error chain joined with ": ", skipping causes already quoted by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => bench::bench(args).await,
        Command::Sweep(args) => bench::sweep(args).await,
        Command::Report {
            inputs,
            format,
            out,
        } => analyze::report(&inputs, format, out.as_deref()),
        Command::Compare { inputs, assertions } => analyze::compare(&inputs, &assertions),
        Command::Deploy {
            gateway,
            spec,
            image,
            overwrite,
        } => remote::deploy(&gateway.gateway, &spec, image.as_deref(), overwrite).await,
        Command::Invoke {
            gateway,
            name,
            payload,
        } => match payload.bytes() {
            Ok(body) => remote::invoke(&gateway.gateway, &name, body).await,
            Err(e) => Err(e),
        },
        Command::Stats { gateway } => remote::stats(&gateway.gateway).await,
        Command::Waste { gateway } => remote::waste(&gateway.gateway).await,
        Command::Sizes { gateway } => remote::sizes(&gateway.gateway).await,
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(2)
        }
    }
}

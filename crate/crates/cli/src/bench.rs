use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::Args;
use coldfaas_core::samples::DEFAULT_TOTAL_REQUESTS;
use coldfaas_core::sim::VirtualBench;
use coldfaas_core::stats::{environment_of, summarize};
use coldfaas_core::types::DEFAULT_TIMEOUT_MS;
use coldfaas_core::{BenchConfig, ConnectionMode, HttpMethod, ProfileSet, SampleSet};

use crate::{parse_method, parse_mode, Payload};

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Target URL, e.g. http://127.0.0.1:8080/invoke/echo
    #[arg(long, required_unless_present = "simulate")]
    url: Option<String>,
    /// Total requests.
    #[arg(long, default_value_t = DEFAULT_TOTAL_REQUESTS)]
    n: usize,
    #[arg(long, default_value = "keep-alive", value_parser = parse_mode)]
    conn: ConnectionMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Request method; POST for /invoke/ paths or when a payload is given, GET otherwise.
    #[arg(long, value_parser = parse_method)]
    method: Option<HttpMethod>,
    #[command(flatten)]
    payload: Payload,
    /// Simulate a gateway in virtual time instead of sending requests.
    #[arg(long = "virtual", requires = "profile")]
    simulate: bool,
    /// Runtime profile for --virtual.
    #[arg(long)]
    profile: Option<String>,
    /// Profile file for --virtual; the shipped profiles if unset.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Simulated worker count for --virtual.
    #[arg(long, default_value_t = 20)]
    workers: usize,
    /// Simulated function timeout for --virtual.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_MS)]
    timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Requests kept in flight.
    #[arg(long)]
    c: usize,
    /// Samples file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,10,20,40")]
    levels: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    cooldown_ms: u64,
    /// One samples file per level is written here.
    #[arg(long)]
    out_dir: PathBuf,
}

impl RunArgs {
    fn label(&self) -> String {
        match (&self.profile, &self.url) {
            (Some(p), _) if self.simulate => p.clone(),
            (_, Some(url)) => environment_of(url),
            _ => "run".to_owned(),
        }
    }

    async fn run(&self, parallelism: usize) -> anyhow::Result<SampleSet> {
        if self.simulate {
            let profiles = match &self.profiles {
                Some(path) => ProfileSet::load(path)?,
                None => ProfileSet::defaults(),
            };
            let name = self.profile.as_deref().expect("clap requires --profile");
            let profile = profiles.get(name)?.clone();
            let bench = VirtualBench::new(profile, self.n, parallelism)
                .with_workers(self.workers)
                .with_seed(self.seed)
                .with_timeout_ms(self.timeout_ms);
            return Ok(bench.run()?);
        }
        let url = self.url.as_deref().expect("clap requires --url");
        let payload = self.payload.bytes()?;
        let method = self
            .method
            .unwrap_or(if url.contains("/invoke/") || !payload.is_empty() {
                HttpMethod::Post
            } else {
                HttpMethod::Get
            });
        let config = BenchConfig::new(url, self.n, parallelism)
            .with_payload(payload)
            .with_method(method)
            .with_mode(self.conn)
            .with_seed(self.seed);
        Ok(coldfaas_client::run_bench(&config).await?)
    }
}

fn write(set: &SampleSet, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    set.write(path)?;
    Ok(())
}

fn describe(set: &SampleSet) -> String {
    let c = set.config.parallelism;
    match summarize(set) {
        Ok(r) => format!(
            "{} c={c} ok={} failed={} p50={:.3} ms p99={:.3} ms throughput={:.1}/s",
            r.environment,
            r.total.count,
            r.failed,
            r.total.p50_ns as f64 / 1e6,
            r.total.p99_ns as f64 / 1e6,
            r.throughput_rps
        ),
        Err(_) => format!(
            "{} c={c} ok=0 failed={}{}",
            environment_of(&set.config.target_url),
            set.failed_count(),
            set.error
                .as_deref()
                .map(|e| format!(" ({e})"))
                .unwrap_or_default()
        ),
    }
}

pub async fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let set = args.run.run(args.c).await?;
    write(&set, &args.out)?;
    eprintln!("{}", describe(&set));
    if set.ok_count() == 0 {
        bail!("no request succeeded");
    }
    Ok(ExitCode::SUCCESS)
}

pub async fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let label = args.run.label();
    let mut failed = 0;
    for (i, &level) in args.levels.iter().enumerate() {
        if i > 0 && !args.run.simulate {
            tokio::time::sleep(Duration::from_millis(args.cooldown_ms)).await;
        }
        let set = match args.run.run(level).await {
            Ok(set) => set,
            Err(e) => {
                let url = args
                    .run
                    .url
                    .clone()
                    .unwrap_or_else(|| format!("sim://{label}"));
                SampleSet::failed(BenchConfig::new(url, args.run.n, level), format!("{e:#}"))
            }
        };
        if set.is_failed() || set.ok_count() == 0 {
            failed += 1;
        }
        let path = args.out_dir.join(format!("{label}-c{level}.jsonl"));
        write(&set, &path)?;
        eprintln!("{}  -> {}", describe(&set), path.display());
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

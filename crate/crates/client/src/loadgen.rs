//! Closed-loop HTTP load generator.
//!
//! `parallelism` lanes each issue their share of the requests back to back.
//! The request-to-lane assignment is fixed up front from the seed, so runs
//! with the same seed send the same requests on the same lanes.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use chrono::Utc;
use coldfaas_core::api::{self, outcome_of, Timing};
use coldfaas_core::samples::ConfigError;
use coldfaas_core::stats::environment_of;
use coldfaas_core::{
    BenchConfig, ConnectionMode, HttpMethod, InvocationRecord, Outcome, SampleSet,
};
use http_body_util::{BodyExt, Full};
use hyper::body::Bytes;
use hyper::client::conn::http1::{self, SendRequest};
use hyper::header::{CONNECTION, CONTENT_TYPE, HOST};
use hyper::{Method, Request, Uri};
use hyper_util::rt::TokioIo;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use tokio::net::TcpStream;

pub const DEFAULT_COOLDOWN: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum LoadgenError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid target {url:?}: {reason}")]
    BadUrl { url: String, reason: String },
    #[error("target {addr} unreachable: {source}")]
    Unreachable {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
struct Target {
    addr: SocketAddr,
    host: String,
    path: String,
}

impl Target {
    async fn resolve(url: &str) -> Result<Self, LoadgenError> {
        let bad = |reason: &str| LoadgenError::BadUrl {
            url: url.to_owned(),
            reason: reason.to_owned(),
        };
        let uri: Uri = url
            .parse()
            .map_err(|e: hyper::http::uri::InvalidUri| bad(&e.to_string()))?;
        if uri.scheme_str() != Some("http") {
            return Err(bad("only http:// targets are supported"));
        }
        let authority = uri.authority().ok_or_else(|| bad("missing host"))?;
        let host = authority.as_str().to_owned();
        let port = authority.port_u16().unwrap_or(80);
        let addr = tokio::net::lookup_host((authority.host(), port))
            .await
            .map_err(|source| LoadgenError::Unreachable {
                addr: host.clone(),
                source,
            })?
            .next()
            .ok_or_else(|| bad("host resolves to no address"))?;
        let path = uri.path_and_query().map_or("/", |p| p.as_str()).to_owned();
        Ok(Target { addr, host, path })
    }
}

/// Deals request ids `0..total` onto `parallelism` lanes: a seeded shuffle,
/// then round-robin. Lane sizes differ by at most one.
pub fn plan_schedule(total: usize, parallelism: usize, seed: u64) -> Vec<Vec<u64>> {
    let parallelism = parallelism.max(1);
    let mut ids: Vec<u64> = (0..total as u64).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut lanes = vec![Vec::with_capacity(total / parallelism + 1); parallelism];
    for (i, id) in ids.into_iter().enumerate() {
        lanes[i % parallelism].push(id);
    }
    lanes
}

type Sender = SendRequest<Full<Bytes>>;

async fn connect(addr: SocketAddr) -> std::io::Result<(Sender, u64)> {
    let started = Instant::now();
    let stream = TcpStream::connect(addr).await?;
    let setup_ns = started.elapsed().as_nanos() as u64;
    stream.set_nodelay(true)?;
    let (sender, conn) = http1::handshake(TokioIo::new(stream))
        .await
        .map_err(std::io::Error::other)?;
    tokio::spawn(async move {
        if let Err(e) = conn.await {
            tracing::trace!("client connection: {e}");
        }
    });
    Ok((sender, setup_ns))
}

struct Lane {
    target: Target,
    mode: ConnectionMode,
    method: Method,
    payload: Bytes,
    function: String,
    epoch: Instant,
    conn: Option<Sender>,
}

struct Reply {
    status: u16,
    timing: Option<Timing>,
    was_warm: bool,
}

impl Lane {
    fn request(&self) -> Request<Full<Bytes>> {
        let mut req = Request::builder()
            .method(self.method.clone())
            .uri(self.target.path.as_str())
            .header(HOST, self.target.host.as_str());
        if self.mode == ConnectionMode::PerRequest {
            req = req.header(CONNECTION, "close");
        }
        if !self.payload.is_empty() {
            req = req.header(CONTENT_TYPE, "application/octet-stream");
        }
        req.body(Full::new(self.payload.clone()))
            .expect("valid request")
    }

    /// Returns the sender to use and the connect time if a new connection was opened.
    async fn sender(&mut self) -> std::io::Result<(Sender, u64)> {
        if self.mode == ConnectionMode::KeepAlive {
            if let Some(mut sender) = self.conn.take() {
                if sender.ready().await.is_ok() {
                    return Ok((sender, 0));
                }
            }
        }
        connect(self.target.addr).await
    }

    async fn send(
        &mut self,
        setup: &mut Option<u64>,
    ) -> Result<Reply, Box<dyn std::error::Error + Send + Sync>> {
        let (mut sender, setup_ns) = self.sender().await?;
        *setup = Some(setup_ns);
        let resp = sender.send_request(self.request()).await?;
        let status = resp.status().as_u16();
        let header = |n: &str| resp.headers().get(n).and_then(|v| v.to_str().ok());
        let timing = Timing::from_headers(header);
        let was_warm = header(api::HEADER_WARM) == Some("true");
        resp.into_body().collect().await?;
        if self.mode == ConnectionMode::KeepAlive {
            self.conn = Some(sender);
        }
        Ok(Reply {
            status,
            timing,
            was_warm,
        })
    }

    async fn run(mut self, ids: Vec<u64>) -> Vec<InvocationRecord> {
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let started = Instant::now();
            let arrival = started.duration_since(self.epoch).as_nanos() as u64;
            let mut setup = None;
            let result = self.send(&mut setup).await;
            let elapsed = started.elapsed().as_nanos() as u64;
            let (outcome, timing, was_warm) = match result {
                Ok(r) => (
                    outcome_of(r.status),
                    r.timing.unwrap_or_default(),
                    r.was_warm,
                ),
                Err(e) => {
                    tracing::debug!(id, "request failed: {e}");
                    self.conn = None;
                    (Outcome::TransportError, Timing::default(), false)
                }
            };
            let components = timing.queue_wait_ns + timing.startup_ns + timing.execution_ns;
            out.push(InvocationRecord {
                request_id: id,
                function: self.function.clone(),
                arrival,
                queue_wait_ns: timing.queue_wait_ns,
                startup_ns: timing.startup_ns,
                execution_ns: timing.execution_ns,
                total_ns: elapsed.max(components + setup.unwrap_or(0)).max(1),
                connection_setup_ns: setup,
                outcome,
                was_warm,
            });
        }
        out
    }
}

/// Runs one closed-loop benchmark. Per-request failures become failed
/// samples; only an unreachable target at start is an error.
pub async fn run_bench(config: &BenchConfig) -> Result<SampleSet, LoadgenError> {
    config.validate()?;
    let target = Target::resolve(&config.target_url).await?;
    TcpStream::connect(target.addr)
        .await
        .map_err(|source| LoadgenError::Unreachable {
            addr: target.addr.to_string(),
            source,
        })?;

    let method = match config.method {
        HttpMethod::Get => Method::GET,
        HttpMethod::Post => Method::POST,
    };
    let function = environment_of(&config.target_url);
    let payload = Bytes::from(config.payload.clone());
    let schedule = plan_schedule(config.total_requests, config.parallelism, config.seed);

    let started = Utc::now();
    let epoch = Instant::now();
    let lanes: Vec<_> = schedule
        .into_iter()
        .map(|ids| {
            let lane = Lane {
                target: target.clone(),
                mode: config.connection_mode,
                method: method.clone(),
                payload: payload.clone(),
                function: function.clone(),
                epoch,
                conn: None,
            };
            tokio::spawn(lane.run(ids))
        })
        .collect();
    let mut samples = Vec::with_capacity(config.total_requests);
    for lane in lanes {
        samples.extend(lane.await.expect("load lane panicked"));
    }
    let elapsed_ns = epoch.elapsed().as_nanos() as u64;
    samples.sort_by_key(|s| s.request_id);
    Ok(SampleSet {
        config: config.clone(),
        samples,
        started,
        finished: Utc::now(),
        elapsed_ns,
        error: None,
    })
}

/// Runs `base` once per parallelism level, in order, pausing `cooldown`
/// between levels. A level that cannot run yields a failed set.
pub async fn sweep(base: &BenchConfig, levels: &[usize], cooldown: Duration) -> Vec<SampleSet> {
    let mut out = Vec::with_capacity(levels.len());
    for (i, &level) in levels.iter().enumerate() {
        if i > 0 {
            tokio::time::sleep(cooldown).await;
        }
        let config = BenchConfig {
            parallelism: level,
            ..base.clone()
        };
        let set = match run_bench(&config).await {
            Ok(set) => set,
            Err(e) => {
                tracing::warn!(level, "sweep level failed: {e}");
                SampleSet::failed(config, e.to_string())
            }
        };
        out.push(set);
    }
    out
}

//! Load-run configuration and the sample files runs produce.
//!
//! A sample file is JSON lines, one [`InvocationRecord`] per line. The run's
//! configuration and timing live in a sidecar `<file>.meta.json`.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::InvocationRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionMode {
    /// Fresh TCP connection for every request.
    PerRequest,
    /// One reused connection per lane.
    #[default]
    KeepAlive,
}

impl FromStr for ConnectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per-request" | "per_request" => Ok(ConnectionMode::PerRequest),
            "keep-alive" | "keep_alive" => Ok(ConnectionMode::KeepAlive),
            other => Err(format!("unknown connection mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub target_url: String,
    pub total_requests: usize,
    pub parallelism: usize,
    pub connection_mode: ConnectionMode,
    pub method: HttpMethod,
    #[serde(skip)]
    pub payload: Vec<u8>,
    #[serde(default)]
    pub payload_len: usize,
    pub seed: u64,
}

pub const DEFAULT_TOTAL_REQUESTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("total_requests must be positive")]
    NoRequests,
    #[error("parallelism must be positive")]
    NoParallelism,
    #[error("parallelism {parallelism} exceeds total_requests {total}")]
    ParallelismAboveTotal { parallelism: usize, total: usize },
}

impl BenchConfig {
    pub fn new(target_url: impl Into<String>, total_requests: usize, parallelism: usize) -> Self {
        BenchConfig {
            target_url: target_url.into(),
            total_requests,
            parallelism,
            connection_mode: ConnectionMode::KeepAlive,
            method: HttpMethod::Get,
            payload: Vec::new(),
            payload_len: 0,
            seed: 0,
        }
    }

    /// Sets the request body; non-empty bodies switch the method to POST.
    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload_len = payload.len();
        if !payload.is_empty() {
            self.method = HttpMethod::Post;
        }
        self.payload = payload;
        self
    }

    pub fn with_mode(mut self, mode: ConnectionMode) -> Self {
        self.connection_mode = mode;
        self
    }

    pub fn with_method(mut self, method: HttpMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_requests == 0 {
            return Err(ConfigError::NoRequests);
        }
        if self.parallelism == 0 {
            return Err(ConfigError::NoParallelism);
        }
        if self.parallelism > self.total_requests {
            return Err(ConfigError::ParallelismAboveTotal {
                parallelism: self.parallelism,
                total: self.total_requests,
            });
        }
        Ok(())
    }
}

/// Everything one load run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub config: BenchConfig,
    #[serde(skip)]
    pub samples: Vec<InvocationRecord>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    /// Monotonic run duration; the throughput denominator.
    pub elapsed_ns: u64,
    /// Set when the run could not be carried out at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum SampleFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl SampleSet {
    pub fn failed(config: BenchConfig, error: impl Into<String>) -> Self {
        let now = Utc::now();
        SampleSet {
            config,
            samples: Vec::new(),
            started: now,
            finished: now,
            elapsed_ns: 0,
            error: Some(error.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn ok_count(&self) -> usize {
        self.samples.iter().filter(|s| s.outcome.is_ok()).count()
    }

    pub fn failed_count(&self) -> usize {
        self.samples.len() - self.ok_count()
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    /// Writes the JSON-lines sample file and its metadata sidecar.
    pub fn write(&self, path: &Path) -> Result<(), SampleFileError> {
        let io_err = |source| SampleFileError::Io {
            path: path.to_owned(),
            source,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        write_records(BufWriter::new(file), &self.samples).map_err(io_err)?;
        let meta = Self::meta_path(path);
        fs::write(
            &meta,
            serde_json::to_vec_pretty(self).expect("sample metadata serializes"),
        )
        .map_err(|source| SampleFileError::Io { path: meta, source })
    }

    /// Reads a sample file. Without a sidecar the run span is taken from
    /// the records themselves.
    pub fn read(path: &Path) -> Result<Self, SampleFileError> {
        let file = fs::File::open(path).map_err(|source| SampleFileError::Io {
            path: path.to_owned(),
            source,
        })?;
        let samples = read_records(io::BufReader::new(file), path)?;
        let meta_path = Self::meta_path(path);
        let mut set = match fs::read(&meta_path) {
            Ok(bytes) => serde_json::from_slice::<SampleSet>(&bytes).map_err(|source| {
                SampleFileError::Parse {
                    path: meta_path,
                    line: 1,
                    source,
                }
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let span = samples
                    .iter()
                    .map(|s| s.arrival.saturating_add(s.total_ns))
                    .max()
                    .unwrap_or(0)
                    .saturating_sub(samples.iter().map(|s| s.arrival).min().unwrap_or(0));
                let now = Utc::now();
                SampleSet {
                    config: BenchConfig::new(path.display().to_string(), samples.len().max(1), 1),
                    samples: Vec::new(),
                    started: now,
                    finished: now,
                    elapsed_ns: span,
                    error: None,
                }
            }
            Err(source) => {
                return Err(SampleFileError::Io {
                    path: meta_path,
                    source,
                })
            }
        };
        set.samples = samples;
        Ok(set)
    }
}

pub fn write_records<W: Write>(mut out: W, records: &[InvocationRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records<R: BufRead>(
    input: R,
    path: &Path,
) -> Result<Vec<InvocationRecord>, SampleFileError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| SampleFileError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|source| SampleFileError::Parse {
                path: path.to_owned(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Outcome;

    fn rec(id: u64, outcome: Outcome) -> InvocationRecord {
        InvocationRecord {
            request_id: id,
            function: "f".into(),
            arrival: id * 10,
            queue_wait_ns: 0,
            startup_ns: 5,
            execution_ns: 0,
            total_ns: 7,
            connection_setup_ns: Some(1),
            outcome,
            was_warm: false,
        }
    }

    #[test]
    fn config_invariants() {
        assert!(BenchConfig::new("u", 10, 10).validate().is_ok());
        assert_eq!(
            BenchConfig::new("u", 1, 2).validate(),
            Err(ConfigError::ParallelismAboveTotal {
                parallelism: 2,
                total: 1
            })
        );
        assert_eq!(
            BenchConfig::new("u", 0, 0).validate(),
            Err(ConfigError::NoRequests)
        );
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.json");
        let mut set = SampleSet::failed(BenchConfig::new("http://x/noop", 2, 1), "x");
        set.error = None;
        set.elapsed_ns = 99;
        set.samples = vec![rec(1, Outcome::Ok), rec(2, Outcome::Timeout)];
        set.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = SampleSet::read(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.ok_count(), 1);
        assert_eq!(back.failed_count(), 1);
    }

    #[test]
    fn reads_bare_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.json");
        let mut buf = Vec::new();
        write_records(&mut buf, &[rec(1, Outcome::Ok), rec(3, Outcome::Ok)]).unwrap();
        fs::write(&path, buf).unwrap();
        let set = SampleSet::read(&path).unwrap();
        assert_eq!(set.samples.len(), 2);
        assert_eq!(set.elapsed_ns, 30 + 7 - 10);
    }
}

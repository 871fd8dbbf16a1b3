//! Real cold executor: one child process per invocation.
//!
//! The payload goes to the child's stdin followed by end-of-stream; whatever
//! the child writes to stdout until it exits is the output. Startup is spawn
//! to first output byte (or exit, for silent functions), execution is the
//! rest. The child runs in its own process group, and the whole group is
//! killed and the child reaped before the call returns.

use std::io;
use std::path::Path;
use std::process::{ExitStatus, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::process::{Child, Command};

use super::{check_driver, check_payload, Driver, DriverError, ExecOutput, ExecRequest};
use crate::clock::{duration_ns, Clock, MonotonicClock};
use crate::registry::ProcessImage;
use crate::types::{DriverKind, Outcome};

const SPAWN_RETRIES: usize = 20;

#[derive(Debug, Clone)]
pub struct ProcessDriverConfig {
    /// Time between SIGTERM and SIGKILL when a call times out.
    pub kill_grace: Duration,
    pub max_payload_bytes: usize,
    /// Output beyond this is discarded and the call fails.
    pub max_output_bytes: usize,
}

impl Default for ProcessDriverConfig {
    fn default() -> Self {
        ProcessDriverConfig {
            kill_grace: Duration::from_millis(50),
            max_payload_bytes: super::DEFAULT_MAX_PAYLOAD_BYTES,
            max_output_bytes: 16 << 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessDriver {
    config: ProcessDriverConfig,
    clock: Arc<dyn Clock>,
    live: Arc<AtomicUsize>,
}

/// Decrements the live counter once the child has been reaped.
#[derive(Debug)]
pub(crate) struct LiveGuard(Arc<AtomicUsize>);

impl LiveGuard {
    pub(crate) fn new(counter: &Arc<AtomicUsize>) -> Self {
        counter.fetch_add(1, Ordering::SeqCst);
        LiveGuard(Arc::clone(counter))
    }
}

impl Drop for LiveGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Default for ProcessDriver {
    fn default() -> Self {
        Self::new(ProcessDriverConfig::default(), Arc::new(MonotonicClock))
    }
}

impl ProcessDriver {
    pub fn new(config: ProcessDriverConfig, clock: Arc<dyn Clock>) -> Self {
        ProcessDriver {
            config,
            clock,
            live: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn config(&self) -> &ProcessDriverConfig {
        &self.config
    }

    /// Runs `image` once with `payload` on stdin.
    pub async fn run(
        &self,
        image: &ProcessImage,
        payload: &[u8],
        timeout: Duration,
    ) -> Result<ExecOutput, DriverError> {
        check_payload(payload, self.config.max_payload_bytes)?;
        let started = Instant::now();
        let child = spawn_image(&image.executable_path)?;
        let _live = LiveGuard::new(&self.live);
        drive_child(child, payload, timeout, started, &self.config).await
    }
}

impl Driver for ProcessDriver {
    fn kind(&self) -> DriverKind {
        DriverKind::Process
    }

    async fn execute(&self, req: ExecRequest<'_>) -> Result<ExecOutput, DriverError> {
        check_driver(DriverKind::Process, req.entry)?;
        let image = req
            .entry
            .image
            .as_ref()
            .ok_or_else(|| DriverError::ImageMissing(req.entry.spec.name.clone()))?;
        let now = self.clock.now();
        if req.deadline <= now {
            return Ok(ExecOutput::timed_out(0));
        }
        self.run(image, req.payload, req.deadline - now).await
    }

    fn live_executor_count(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }
}

/// Spawns `path` in a fresh process group with piped stdin/stdout.
pub(crate) fn spawn_image(path: &Path) -> Result<Child, DriverError> {
    let mut attempt = 0;
    loop {
        let mut cmd = Command::new(path);
        cmd.stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .process_group(0)
            .kill_on_drop(true);
        match cmd.spawn() {
            Ok(child) => return Ok(child),
            // A concurrent fork elsewhere in the process may still hold the
            // image's write descriptor for a moment after deploy.
            Err(e) if e.raw_os_error() == Some(libc::ETXTBSY) && attempt < SPAWN_RETRIES => {
                attempt += 1;
                std::thread::sleep(Duration::from_millis(1));
            }
            Err(source) => {
                return Err(DriverError::Spawn {
                    path: path.to_owned(),
                    source,
                })
            }
        }
    }
}

pub(crate) fn signal_group(pgid: Option<u32>, signal: libc::c_int) {
    if let Some(pgid) = pgid.and_then(|p| libc::pid_t::try_from(p).ok()) {
        // SAFETY: plain syscall; ESRCH for an already empty group is fine.
        unsafe {
            libc::killpg(pgid, signal);
        }
    }
}

struct Collected {
    output: Vec<u8>,
    first_byte: Option<Instant>,
    overflow: bool,
    status: ExitStatus,
    exited: Instant,
}

async fn collect(child: &mut Child, payload: &[u8], max_output: usize) -> io::Result<Collected> {
    let stdin = child.stdin.take();
    let mut stdout = child
        .stdout
        .take()
        .ok_or_else(|| io::Error::other("child stdout not captured"))?;

    let write = async move {
        if let Some(mut stdin) = stdin {
            // Functions may exit without reading their input.
            if let Err(e) = stdin.write_all(payload).await {
                if e.kind() != io::ErrorKind::BrokenPipe {
                    tracing::debug!("writing payload: {e}");
                }
            }
        }
    };
    let read = async {
        let mut output = Vec::new();
        let mut first_byte = None;
        let mut overflow = false;
        let mut chunk = vec![0u8; 64 * 1024];
        loop {
            let n = stdout.read(&mut chunk).await?;
            if n == 0 {
                break;
            }
            first_byte.get_or_insert_with(Instant::now);
            if output.len() + n > max_output {
                overflow = true;
            } else {
                output.extend_from_slice(&chunk[..n]);
            }
        }
        io::Result::Ok((output, first_byte, overflow))
    };
    let ((), read) = tokio::join!(write, read);
    let (output, first_byte, overflow) = read?;
    let status = child.wait().await?;
    Ok(Collected {
        output,
        first_byte,
        overflow,
        status,
        exited: Instant::now(),
    })
}

/// Feeds `payload` to an already running child and collects its result,
/// killing the group if `timeout` passes. The child is reaped on every path.
pub(crate) async fn drive_child(
    mut child: Child,
    payload: &[u8],
    timeout: Duration,
    started: Instant,
    config: &ProcessDriverConfig,
) -> Result<ExecOutput, DriverError> {
    let pgid = child.id();
    let result = tokio::time::timeout(
        timeout,
        collect(&mut child, payload, config.max_output_bytes),
    )
    .await;
    match result {
        Ok(Ok(done)) => {
            // descendants left behind by the function
            signal_group(pgid, libc::SIGKILL);
            let ready = done.first_byte.unwrap_or(done.exited);
            let outcome = if done.status.success() && !done.overflow {
                Outcome::Ok
            } else {
                Outcome::FunctionError
            };
            Ok(ExecOutput {
                output: done.output,
                startup_ns: duration_ns(ready - started),
                execution_ns: duration_ns(done.exited - ready),
                outcome,
                was_warm: false,
            })
        }
        Ok(Err(e)) => {
            terminate(&mut child, pgid, config.kill_grace).await;
            Err(DriverError::Io(e))
        }
        Err(_) => {
            terminate(&mut child, pgid, config.kill_grace).await;
            Ok(ExecOutput::timed_out(duration_ns(started.elapsed())))
        }
    }
}

/// SIGTERM, a grace period, then SIGKILL; always reaps.
pub(crate) async fn terminate(child: &mut Child, pgid: Option<u32>, grace: Duration) {
    signal_group(pgid, libc::SIGTERM);
    signal_group(pgid, libc::SIGCONT);
    if tokio::time::timeout(grace, child.wait()).await.is_err() {
        signal_group(pgid, libc::SIGKILL);
        let _ = child.kill().await;
    }
    signal_group(pgid, libc::SIGKILL);
}

//! Warm-pool baseline driver.
//!
//! After serving a request the executor is kept paused until its idle
//! timeout expires. A later request for the same function version resumes
//! it instead of paying a cold start. With the process inner mechanism a
//! paused executor is a real pre-spawned, SIGSTOPped child blocked on its
//! stdin; with the simulated inner mechanism it is a record and the resume
//! costs `resume` of (possibly virtual) time.
//!
//! Idle time is booked in a [`WasteLedger`]: every second an executor sits
//! paused counts as an idle executor-second and `memory_mb` reserved MB-seconds.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::process::Child;
use tokio::sync::Notify;

use super::process::{drive_child, signal_group, spawn_image, ProcessDriverConfig};
use super::simulated::{SimMode, SimulatedDriver};
use super::{check_driver, check_payload, Driver, DriverError, ExecOutput, ExecRequest};
use crate::clock::{duration_ns, Clock, ClockReading, MonotonicClock};
use crate::registry::RegistryEntry;
use crate::types::{DriverKind, Outcome};

/// How a warm-pool executor is cold-started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarmInner {
    Process,
    Simulated { profile: String },
}

#[derive(Debug, Clone)]
pub struct WarmPoolConfig {
    pub idle_timeout: Duration,
    /// Warm-start latency charged by the simulated inner mechanism.
    pub resume: Duration,
    pub inner: WarmInner,
    pub process: ProcessDriverConfig,
}

pub const DEFAULT_RESUME: Duration = Duration::from_micros(13_600);

impl Default for WarmPoolConfig {
    fn default() -> Self {
        WarmPoolConfig {
            idle_timeout: Duration::from_secs(30),
            resume: DEFAULT_RESUME,
            inner: WarmInner::Process,
            process: ProcessDriverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorState {
    Starting,
    IdlePaused,
    Executing,
}

#[derive(Debug)]
struct PausedChild {
    child: Child,
    pgid: Option<u32>,
}

impl PausedChild {
    fn spawn(path: &std::path::Path) -> Result<Self, DriverError> {
        let child = spawn_image(path)?;
        let pgid = child.id();
        signal_group(pgid, libc::SIGSTOP);
        Ok(PausedChild { child, pgid })
    }

    async fn destroy(mut self) {
        signal_group(self.pgid, libc::SIGKILL);
        let _ = self.child.kill().await;
    }
}

#[derive(Debug)]
pub struct WarmExecutor {
    pub executor_id: u64,
    pub function: String,
    pub version: u64,
    pub state: ExecutorState,
    pub last_used: ClockReading,
    pub idle_deadline: ClockReading,
    pub memory_mb: u64,
    paused: Option<PausedChild>,
}

/// Resources held by idle executors, accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WasteLedger {
    pub idle_executor_seconds: f64,
    pub reserved_memory_mb_seconds: f64,
    pub cold_starts: u64,
    pub warm_hits: u64,
    pub reaped: u64,
}

impl WasteLedger {
    fn book_idle(&mut self, idle: Duration, memory_mb: u64) {
        let secs = idle.as_secs_f64();
        self.idle_executor_seconds += secs;
        self.reserved_memory_mb_seconds += secs * memory_mb as f64;
    }
}

#[derive(Debug, Default)]
struct PoolState {
    executors: BTreeMap<u64, WarmExecutor>,
    /// Totals for executors already destroyed, plus the start counters.
    ledger: WasteLedger,
    next_id: u64,
}

enum Claim {
    Warm(u64, Option<PausedChild>),
    Cold(u64),
}

#[derive(Debug)]
pub struct WarmPoolDriver {
    config: WarmPoolConfig,
    clock: Arc<dyn Clock>,
    simulated: Arc<SimulatedDriver>,
    state: Mutex<PoolState>,
    changed: Notify,
}

impl WarmPoolDriver {
    pub fn new(
        config: WarmPoolConfig,
        clock: Arc<dyn Clock>,
        simulated: Arc<SimulatedDriver>,
    ) -> Self {
        WarmPoolDriver {
            config,
            clock,
            simulated,
            state: Mutex::new(PoolState::default()),
            changed: Notify::new(),
        }
    }

    pub fn config(&self) -> &WarmPoolConfig {
        &self.config
    }

    fn claim(&self, entry: &RegistryEntry) -> Claim {
        let mut state = self.state.lock();
        let warm = state
            .executors
            .values()
            .filter(|e| {
                e.state == ExecutorState::IdlePaused
                    && e.function == entry.spec.name
                    && e.version == entry.version
            })
            .max_by_key(|e| (e.last_used, e.executor_id))
            .map(|e| e.executor_id);
        match warm {
            Some(id) => {
                let now = self.clock.now();
                let exec = state.executors.get_mut(&id).expect("present");
                exec.state = ExecutorState::Executing;
                let (idle, memory_mb) = (now.since(exec.last_used), exec.memory_mb);
                let paused = exec.paused.take();
                state.ledger.book_idle(idle, memory_mb);
                Claim::Warm(id, paused)
            }
            None => {
                state.next_id += 1;
                let id = state.next_id;
                let now = self.clock.now();
                state.executors.insert(
                    id,
                    WarmExecutor {
                        executor_id: id,
                        function: entry.spec.name.clone(),
                        version: entry.version,
                        state: ExecutorState::Starting,
                        last_used: now,
                        idle_deadline: now,
                        memory_mb: entry.spec.memory_mb,
                        paused: None,
                    },
                );
                Claim::Cold(id)
            }
        }
    }

    async fn run_process(
        &self,
        entry: &RegistryEntry,
        payload: &[u8],
        timeout: Duration,
        paused: Option<PausedChild>,
    ) -> Result<ExecOutput, DriverError> {
        let image = entry
            .image
            .as_ref()
            .ok_or_else(|| DriverError::ImageMissing(entry.spec.name.clone()))?;
        let started = Instant::now();
        let child = match paused {
            Some(p) => {
                signal_group(p.pgid, libc::SIGCONT);
                p.child
            }
            None => spawn_image(&image.executable_path)?,
        };
        drive_child(child, payload, timeout, started, &self.config.process).await
    }

    async fn run_simulated(
        &self,
        profile: &str,
        payload: &[u8],
        deadline: ClockReading,
        worker: usize,
        warm: bool,
    ) -> Result<ExecOutput, DriverError> {
        if !warm {
            let profile = self.simulated.profile(profile)?;
            return self.simulated.run(profile, payload, deadline, worker).await;
        }
        let budget = duration_ns(deadline.since(self.clock.now()));
        let resume = duration_ns(self.config.resume);
        let (startup_ns, outcome) = if resume <= budget {
            (resume, Outcome::Ok)
        } else {
            (budget, Outcome::Timeout)
        };
        if self.simulated.mode() == SimMode::Realtime {
            tokio::time::sleep(Duration::from_nanos(startup_ns)).await;
        }
        Ok(ExecOutput {
            output: if outcome.is_ok() {
                payload.to_vec()
            } else {
                Vec::new()
            },
            startup_ns,
            execution_ns: 0,
            outcome,
            was_warm: true,
        })
    }

    fn settle(
        &self,
        id: u64,
        started: ClockReading,
        out: &ExecOutput,
        was_warm: bool,
        paused: Option<PausedChild>,
    ) {
        let mut state = self.state.lock();
        if out.outcome.is_ok() {
            if was_warm {
                state.ledger.warm_hits += 1;
            } else {
                state.ledger.cold_starts += 1;
            }
        }
        // Virtual-time inner mechanisms report latency without elapsing it.
        let finished = self
            .clock
            .now()
            .max(started + Duration::from_nanos(out.busy_ns()));
        let exec = state
            .executors
            .get_mut(&id)
            .expect("claimed executor stays in the table");
        exec.state = ExecutorState::IdlePaused;
        exec.last_used = finished;
        exec.idle_deadline = finished + self.config.idle_timeout;
        exec.paused = paused;
        drop(state);
        self.changed.notify_one();
    }

    fn discard(&self, id: u64) -> Option<PausedChild> {
        let mut state = self.state.lock();
        state.executors.remove(&id).and_then(|e| e.paused)
    }

    /// Destroys every idle executor whose deadline is at or before `now`,
    /// booking its idle interval up to `now`. Executing executors are never reaped.
    pub async fn reap_idle(&self, now: ClockReading) -> usize {
        self.reap(now, false).await
    }

    /// Destroys all idle executors regardless of deadline.
    pub async fn drain(&self) -> usize {
        self.reap(self.clock.now(), true).await
    }

    async fn reap(&self, now: ClockReading, force: bool) -> usize {
        let (count, victims) = {
            let mut state = self.state.lock();
            let due: Vec<u64> = state
                .executors
                .values()
                .filter(|e| {
                    e.state == ExecutorState::IdlePaused && (force || e.idle_deadline <= now)
                })
                .map(|e| e.executor_id)
                .collect();
            let mut victims = Vec::new();
            for id in &due {
                let exec = state.executors.remove(id).expect("listed above");
                state
                    .ledger
                    .book_idle(now.since(exec.last_used), exec.memory_mb);
                state.ledger.reaped += 1;
                victims.extend(exec.paused);
            }
            (due.len(), victims)
        };
        if count > 0 {
            tracing::debug!(count, "reaped idle executors");
        }
        for victim in victims {
            victim.destroy().await;
        }
        count
    }

    /// Ledger as of `now`, including the idle time of executors still paused.
    pub fn ledger(&self, now: ClockReading) -> WasteLedger {
        let state = self.state.lock();
        let mut ledger = state.ledger;
        for exec in state.executors.values() {
            if exec.state == ExecutorState::IdlePaused {
                ledger.book_idle(now.since(exec.last_used), exec.memory_mb);
            }
        }
        ledger
    }

    pub fn ledger_now(&self) -> WasteLedger {
        self.ledger(self.clock.now())
    }

    pub fn executor_states(&self) -> Vec<ExecutorState> {
        self.state
            .lock()
            .executors
            .values()
            .map(|e| e.state)
            .collect()
    }

    fn next_deadline(&self) -> Option<ClockReading> {
        self.state
            .lock()
            .executors
            .values()
            .filter(|e| e.state == ExecutorState::IdlePaused)
            .map(|e| e.idle_deadline)
            .min()
    }

    /// Background reaper for a pool on the monotonic clock: sleeps until the
    /// earliest idle deadline, reaps, repeats.
    pub async fn run_reaper(self: Arc<Self>) {
        loop {
            let wake = self.next_deadline();
            let sleep = async {
                match wake {
                    Some(at) => {
                        tokio::time::sleep_until(MonotonicClock::instant_of(at).into()).await
                    }
                    None => std::future::pending().await,
                }
            };
            tokio::select! {
                () = sleep => {
                    self.reap_idle(self.clock.now()).await;
                }
                () = self.changed.notified() => {}
            }
        }
    }
}

impl Driver for WarmPoolDriver {
    fn kind(&self) -> DriverKind {
        DriverKind::Warmpool
    }

    async fn execute(&self, req: ExecRequest<'_>) -> Result<ExecOutput, DriverError> {
        check_driver(DriverKind::Warmpool, req.entry)?;
        check_payload(req.payload, self.config.process.max_payload_bytes)?;
        if self.config.inner == WarmInner::Process && req.entry.image.is_none() {
            return Err(DriverError::ImageMissing(req.entry.spec.name.clone()));
        }
        let started = self.clock.now();
        if req.deadline <= started {
            return Ok(ExecOutput::timed_out(0));
        }
        let claim = self.claim(req.entry);
        let (id, warm, paused) = match claim {
            Claim::Warm(id, paused) => (id, true, paused),
            Claim::Cold(id) => (id, false, None),
        };
        let result = match &self.config.inner {
            WarmInner::Process => {
                self.run_process(req.entry, req.payload, req.deadline - started, paused)
                    .await
            }
            WarmInner::Simulated { profile } => {
                self.run_simulated(profile, req.payload, req.deadline, req.worker, warm)
                    .await
            }
        };
        let mut out = match result {
            Ok(out) => out,
            Err(e) => {
                if let Some(p) = self.discard(id) {
                    p.destroy().await;
                }
                return Err(e);
            }
        };
        out.was_warm = warm;
        if !warm && !out.outcome.is_ok() {
            // failed cold starts leave nothing behind
            if let Some(p) = self.discard(id) {
                p.destroy().await;
            }
            return Ok(out);
        }
        let replacement = match (&self.config.inner, &req.entry.image) {
            (WarmInner::Process, Some(image)) => match PausedChild::spawn(&image.executable_path) {
                Ok(p) => Some(p),
                Err(e) => {
                    tracing::warn!("could not pre-spawn warm executor: {e}");
                    None
                }
            },
            _ => None,
        };
        self.settle(id, started, &out, warm, replacement);
        Ok(out)
    }

    fn live_executor_count(&self) -> usize {
        self.state.lock().executors.len()
    }
}

//! FIFO dispatcher with a fixed worker pool.
//!
//! Requests queue in arrival order on a fair semaphore with `workers`
//! permits; each permit also carries a worker index so the simulated driver
//! can use a per-worker PRNG stream. Counters live under one lock so that a
//! snapshot always satisfies `arrivals == completed + queued + in_flight`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::clock::{duration_ns, Clock, ClockReading};
use crate::driver::{DriverError, DriverSet, ExecRequest};
use crate::registry::{Registry, RegistryError};
use crate::types::{InvocationRecord, Outcome, DEFAULT_TIMEOUT_MS};

pub const NOOP_FUNCTION: &str = "noop";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatcherConfig {
    pub workers: usize,
    /// `None` is unbounded.
    pub queue_capacity: Option<usize>,
    pub default_timeout_ms: u64,
}

impl Default for DispatcherConfig {
    fn default() -> Self {
        DispatcherConfig {
            workers: 20,
            queue_capacity: None,
            default_timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("function {0:?} is not deployed")]
    NotFound(String),
    #[error(transparent)]
    Registry(RegistryError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("dispatcher configuration: {0}")]
    Config(&'static str),
}

impl From<RegistryError> for DispatchError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::NotFound(name) => DispatchError::NotFound(name),
            other => DispatchError::Registry(other),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounters {
    pub ok: u64,
    pub function_error: u64,
    pub timeout: u64,
    pub rejected: u64,
    /// Driver failures that produced no outcome (spawn errors, missing images).
    pub error: u64,
}

impl OutcomeCounters {
    fn bump(&mut self, outcome: Option<Outcome>) {
        match outcome {
            Some(Outcome::Ok) => self.ok += 1,
            Some(Outcome::FunctionError) => self.function_error += 1,
            Some(Outcome::Timeout) => self.timeout += 1,
            Some(Outcome::Rejected) => self.rejected += 1,
            Some(Outcome::TransportError) | None => self.error += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.ok + self.function_error + self.timeout + self.rejected + self.error
    }
}

/// Point-in-time view of the dispatcher.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub arrivals: u64,
    pub queued: u64,
    pub in_flight: u64,
    pub max_in_flight: u64,
    pub completed: u64,
    pub outcomes: OutcomeCounters,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub record: InvocationRecord,
    pub output: Vec<u8>,
}

#[derive(Debug)]
pub struct Dispatcher {
    config: DispatcherConfig,
    registry: Arc<Registry>,
    drivers: Arc<DriverSet>,
    clock: Arc<dyn Clock>,
    permits: Semaphore,
    free_workers: Mutex<Vec<usize>>,
    stats: Mutex<StatsSnapshot>,
    next_request: AtomicU64,
}

/// A held worker slot; returns the index and the permit on drop.
struct WorkerSlot<'a> {
    dispatcher: &'a Dispatcher,
    index: usize,
    _permit: tokio::sync::SemaphorePermit<'a>,
}

impl Drop for WorkerSlot<'_> {
    fn drop(&mut self) {
        self.dispatcher.free_workers.lock().push(self.index);
    }
}

enum Admission<'a> {
    Admitted(WorkerSlot<'a>, ClockReading),
    Rejected,
}

impl Dispatcher {
    pub fn new(
        config: DispatcherConfig,
        registry: Arc<Registry>,
        drivers: Arc<DriverSet>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, DispatchError> {
        if config.workers == 0 {
            return Err(DispatchError::Config("workers must be at least 1"));
        }
        if config.queue_capacity == Some(0) {
            return Err(DispatchError::Config("queue_capacity must be positive"));
        }
        Ok(Dispatcher {
            permits: Semaphore::new(config.workers),
            free_workers: Mutex::new((0..config.workers).rev().collect()),
            config,
            registry,
            drivers,
            clock,
            stats: Mutex::new(StatsSnapshot::default()),
            next_request: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &DispatcherConfig {
        &self.config
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn drivers(&self) -> &Arc<DriverSet> {
        &self.drivers
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn stats_snapshot(&self) -> StatsSnapshot {
        self.stats.lock().clone()
    }

    async fn admit(&self) -> Admission<'_> {
        {
            let mut stats = self.stats.lock();
            stats.arrivals += 1;
            if self
                .config
                .queue_capacity
                .is_some_and(|cap| stats.queued >= cap as u64)
            {
                stats.completed += 1;
                stats.outcomes.bump(Some(Outcome::Rejected));
                return Admission::Rejected;
            }
            stats.queued += 1;
        }
        // tokio's semaphore hands out permits in request order
        let permit = self
            .permits
            .acquire()
            .await
            .expect("dispatcher semaphore is never closed");
        let index = self
            .free_workers
            .lock()
            .pop()
            .expect("a permit always has a free worker index");
        let dequeued = {
            let mut stats = self.stats.lock();
            stats.queued -= 1;
            stats.in_flight += 1;
            stats.max_in_flight = stats.max_in_flight.max(stats.in_flight);
            self.clock.now()
        };
        Admission::Admitted(
            WorkerSlot {
                dispatcher: self,
                index,
                _permit: permit,
            },
            dequeued,
        )
    }

    fn finish(&self, outcome: Option<Outcome>) {
        let mut stats = self.stats.lock();
        stats.in_flight -= 1;
        stats.completed += 1;
        stats.outcomes.bump(outcome);
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        function: &str,
        arrival: ClockReading,
        queue_wait: Duration,
        startup_ns: u64,
        execution_ns: u64,
        outcome: Outcome,
        was_warm: bool,
    ) -> InvocationRecord {
        let queue_wait_ns = duration_ns(queue_wait);
        let elapsed = duration_ns(self.clock.now().since(arrival));
        let components = queue_wait_ns
            .saturating_add(startup_ns)
            .saturating_add(execution_ns);
        InvocationRecord {
            request_id: self.next_request.fetch_add(1, Ordering::Relaxed),
            function: function.to_owned(),
            arrival: arrival.as_nanos(),
            queue_wait_ns,
            startup_ns,
            execution_ns,
            // virtual-time drivers report latency they did not spend
            total_ns: elapsed.max(components),
            connection_setup_ns: None,
            outcome,
            was_warm,
        }
    }

    /// Runs `function` once with `payload`. The deadline is `arrival` plus
    /// the function's timeout, so queueing counts against it.
    pub async fn dispatch(
        &self,
        function: &str,
        payload: &[u8],
        arrival: ClockReading,
    ) -> Result<Invocation, DispatchError> {
        let entry = self.registry.resolve(function)?;
        let deadline = arrival + Duration::from_millis(entry.spec.timeout_ms);

        let (slot, dequeued) = match self.admit().await {
            Admission::Admitted(slot, at) => (slot, at),
            Admission::Rejected => {
                let record = self.record(
                    function,
                    arrival,
                    Duration::ZERO,
                    0,
                    0,
                    Outcome::Rejected,
                    false,
                );
                return Ok(Invocation {
                    record,
                    output: Vec::new(),
                });
            }
        };
        let queue_wait = dequeued.since(arrival);

        if dequeued >= deadline {
            self.finish(Some(Outcome::Timeout));
            drop(slot);
            let record = self.record(function, arrival, queue_wait, 0, 0, Outcome::Timeout, false);
            return Ok(Invocation {
                record,
                output: Vec::new(),
            });
        }

        let result = self
            .drivers
            .execute(ExecRequest {
                entry: &entry,
                payload,
                deadline,
                worker: slot.index,
            })
            .await;
        // count the completion before the slot frees so in_flight never exceeds workers
        self.finish(result.as_ref().ok().map(|o| o.outcome));
        drop(slot);
        match result {
            Ok(out) => {
                let record = self.record(
                    function,
                    arrival,
                    queue_wait,
                    out.startup_ns,
                    out.execution_ns,
                    out.outcome,
                    out.was_warm,
                );
                Ok(Invocation {
                    record,
                    output: out.output,
                })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Passes through the queue and a worker slot without running a driver.
    pub async fn noop(&self, arrival: ClockReading) -> InvocationRecord {
        match self.admit().await {
            Admission::Admitted(slot, dequeued) => {
                self.finish(Some(Outcome::Ok));
                drop(slot);
                self.record(
                    NOOP_FUNCTION,
                    arrival,
                    dequeued.since(arrival),
                    0,
                    0,
                    Outcome::Ok,
                    false,
                )
            }
            Admission::Rejected => self.record(
                NOOP_FUNCTION,
                arrival,
                Duration::ZERO,
                0,
                0,
                Outcome::Rejected,
                false,
            ),
        }
    }
}

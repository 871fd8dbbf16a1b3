//! Latency-profile driver standing in for runtimes that need root or KVM.
//!
//! Each call samples a startup latency from the function's
//! [`RuntimeProfile`](crate::profile::RuntimeProfile) given the number of
//! calls in flight on this driver, then either sleeps for it (realtime) or
//! just reports it (virtual). The output echoes the payload.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_driver, check_payload, Driver, DriverError, ExecOutput, ExecRequest};
use crate::clock::{Clock, ClockReading, MonotonicClock};
use crate::profile::{ProfileError, ProfileSet, RuntimeProfile};
use crate::types::{DriverKind, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Block for the sampled latency.
    #[default]
    Realtime,
    /// Return at once and only report the sampled latency.
    Virtual,
}

/// PRNG stream for one worker: the run seed picks the key, the worker index
/// picks one of ChaCha's independent streams.
pub fn worker_stream(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

/// Result of a single simulated start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulatedStart {
    pub startup_ns: u64,
    pub outcome: Outcome,
}

/// Samples one start of `profile` with `in_flight` concurrent starts,
/// cut at `budget` (the time left before the deadline).
pub fn simulated_start(
    profile: &RuntimeProfile,
    in_flight: u32,
    budget_ns: u64,
    rng: &mut ChaCha8Rng,
) -> SimulatedStart {
    let latency = profile.sample_ns(rng, in_flight.max(1));
    if latency > budget_ns {
        SimulatedStart {
            startup_ns: budget_ns,
            outcome: Outcome::Timeout,
        }
    } else {
        SimulatedStart {
            startup_ns: latency,
            outcome: Outcome::Ok,
        }
    }
}

#[derive(Debug)]
pub struct SimulatedDriver {
    profiles: Arc<ProfileSet>,
    mode: SimMode,
    clock: Arc<dyn Clock>,
    streams: Vec<Mutex<ChaCha8Rng>>,
    execution: Duration,
    max_payload_bytes: usize,
    in_flight: AtomicU32,
    live: AtomicUsize,
}

struct InFlight<'a>(&'a SimulatedDriver);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.0.live.fetch_sub(1, Ordering::SeqCst);
    }
}

impl SimulatedDriver {
    /// `workers` independent PRNG streams are derived from `seed`.
    pub fn new(profiles: Arc<ProfileSet>, mode: SimMode, seed: u64, workers: usize) -> Self {
        SimulatedDriver {
            profiles,
            mode,
            clock: Arc::new(MonotonicClock),
            streams: (0..workers.max(1))
                .map(|w| Mutex::new(worker_stream(seed, w)))
                .collect(),
            execution: Duration::ZERO,
            max_payload_bytes: super::DEFAULT_MAX_PAYLOAD_BYTES,
            in_flight: AtomicU32::new(0),
            live: AtomicUsize::new(0),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Fixed execution time added after the sampled startup.
    pub fn with_execution(mut self, execution: Duration) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_max_payload(mut self, bytes: usize) -> Self {
        self.max_payload_bytes = bytes;
        self
    }

    pub fn mode(&self) -> SimMode {
        self.mode
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    pub fn profile(&self, name: &str) -> Result<&RuntimeProfile, ProfileError> {
        self.profiles.get(name)
    }

    /// One simulated cold start of `profile`.
    pub async fn run(
        &self,
        profile: &RuntimeProfile,
        payload: &[u8],
        deadline: ClockReading,
        worker: usize,
    ) -> Result<ExecOutput, DriverError> {
        check_payload(payload, self.max_payload_bytes)?;
        self.live.fetch_add(1, Ordering::SeqCst);
        let in_flight = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(self);

        let budget = crate::clock::duration_ns(deadline.since(self.clock.now()));
        let start = {
            let mut rng = self.streams[worker % self.streams.len()].lock();
            simulated_start(profile, in_flight, budget, &mut rng)
        };
        let configured = crate::clock::duration_ns(self.execution);
        let (execution_ns, outcome) = match start.outcome {
            Outcome::Ok if start.startup_ns.saturating_add(configured) <= budget => {
                (configured, Outcome::Ok)
            }
            Outcome::Ok => (budget - start.startup_ns, Outcome::Timeout),
            other => (0, other),
        };
        if self.mode == SimMode::Realtime {
            tokio::time::sleep(Duration::from_nanos(start.startup_ns + execution_ns)).await;
        }
        Ok(ExecOutput {
            output: if outcome.is_ok() {
                payload.to_vec()
            } else {
                Vec::new()
            },
            startup_ns: start.startup_ns,
            execution_ns,
            outcome,
            was_warm: false,
        })
    }
}

impl Driver for SimulatedDriver {
    fn kind(&self) -> DriverKind {
        DriverKind::Simulated
    }

    async fn execute(&self, req: ExecRequest<'_>) -> Result<ExecOutput, DriverError> {
        check_driver(DriverKind::Simulated, req.entry)?;
        let name = req
            .entry
            .spec
            .profile_name
            .as_deref()
            .ok_or_else(|| ProfileError::Unknown(String::new()))?;
        let profile = self.profiles.get(name)?;
        self.run(profile, req.payload, req.deadline, req.worker)
            .await
    }

    fn live_executor_count(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }
}

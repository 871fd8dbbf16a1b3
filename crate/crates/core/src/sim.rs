//! Closed-loop load run against the simulated driver in virtual time.
//!
//! A discrete-event model of the load generator, the FIFO dispatcher and
//! the simulated driver: `parallelism` lanes each keep one request
//! outstanding, `workers` slots serve the queue in arrival order, and every
//! start samples the profile with the number of busy workers as its
//! in-flight count. Nothing sleeps, so a 10 000-request run of a 2 s
//! profile takes milliseconds, and a fixed seed reproduces every sample.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use chrono::Utc;
use rand_chacha::ChaCha8Rng;

use crate::driver::simulated::{simulated_start, worker_stream};
use crate::profile::RuntimeProfile;
use crate::samples::{BenchConfig, ConfigError, SampleSet};
use crate::types::{InvocationRecord, Outcome, DEFAULT_TIMEOUT_MS};

#[derive(Debug, Clone)]
pub struct VirtualBench {
    pub profile: RuntimeProfile,
    pub total_requests: usize,
    pub parallelism: usize,
    pub workers: usize,
    pub seed: u64,
    pub timeout_ms: u64,
}

impl VirtualBench {
    pub fn new(profile: RuntimeProfile, total_requests: usize, parallelism: usize) -> Self {
        VirtualBench {
            profile,
            total_requests,
            parallelism,
            workers: 20,
            seed: 0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig::new(
            format!("sim://{}", self.profile.name),
            self.total_requests,
            self.parallelism,
        )
        .with_seed(self.seed)
    }

    pub fn run(&self) -> Result<SampleSet, ConfigError> {
        let config = self.bench_config();
        config.validate()?;
        if self.workers == 0 {
            return Err(ConfigError::NoParallelism);
        }
        let started = Utc::now();
        let mut sim = Simulation {
            bench: self,
            now: 0,
            records: Vec::with_capacity(self.total_requests),
            queue: VecDeque::new(),
            free: (0..self.workers).collect(),
            rngs: (0..self.workers)
                .map(|w| worker_stream(self.seed, w))
                .collect(),
            events: BinaryHeap::new(),
            busy: 0,
            seq: 0,
        };
        for lane in 0..self.parallelism {
            sim.issue(lane);
        }
        while let Some(Reverse((at, _, done))) = sim.events.pop() {
            sim.now = at;
            sim.complete(done);
        }
        let elapsed_ns = sim.now;
        let samples = sim.records;
        Ok(SampleSet {
            config,
            samples,
            started,
            finished: Utc::now(),
            elapsed_ns,
            error: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Completion {
    request: usize,
    lane: usize,
    worker: usize,
}

struct Simulation<'a> {
    bench: &'a VirtualBench,
    now: u64,
    records: Vec<InvocationRecord>,
    /// (request, lane) waiting for a worker
    queue: VecDeque<(usize, usize)>,
    free: BTreeSet<usize>,
    rngs: Vec<ChaCha8Rng>,
    events: BinaryHeap<Reverse<(u64, u64, Completion)>>,
    busy: u32,
    seq: u64,
}

impl Simulation<'_> {
    fn issue(&mut self, lane: usize) {
        let request = self.records.len();
        self.records.push(InvocationRecord {
            request_id: request as u64,
            function: self.bench.profile.name.clone(),
            arrival: self.now,
            queue_wait_ns: 0,
            startup_ns: 0,
            execution_ns: 0,
            total_ns: 0,
            connection_setup_ns: None,
            outcome: Outcome::Ok,
            was_warm: false,
        });
        match self.free.pop_first() {
            Some(worker) => self.start(request, lane, worker),
            None => self.queue.push_back((request, lane)),
        }
    }

    fn start(&mut self, request: usize, lane: usize, worker: usize) {
        self.busy += 1;
        let arrival = self.records[request].arrival;
        let deadline = arrival.saturating_add(self.bench.timeout_ms.saturating_mul(1_000_000));
        let budget = deadline.saturating_sub(self.now);
        let start = simulated_start(
            &self.bench.profile,
            self.busy,
            budget,
            &mut self.rngs[worker],
        );
        let record = &mut self.records[request];
        record.queue_wait_ns = self.now - arrival;
        record.startup_ns = start.startup_ns;
        record.outcome = start.outcome;
        let finish = self.now + start.startup_ns;
        record.total_ns = finish - arrival;
        self.seq += 1;
        self.events.push(Reverse((
            finish,
            self.seq,
            Completion {
                request,
                lane,
                worker,
            },
        )));
    }

    fn complete(&mut self, done: Completion) {
        self.busy -= 1;
        match self.queue.pop_front() {
            Some((request, lane)) => self.start(request, lane, done.worker),
            None => {
                self.free.insert(done.worker);
            }
        }
        if self.records.len() < self.bench.total_requests {
            self.issue(done.lane);
        }
    }
}

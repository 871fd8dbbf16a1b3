//! The executor-driver contract and its three implementations.
//!
//! Process and simulated drivers are cold-only: nothing created for a call
//! outlives it, which [`Driver::live_executor_count`] makes observable. The
//! warm-pool driver is the baseline that keeps paused executors around and
//! books the resources they hold in a [`WasteLedger`].

use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::clock::{Clock, ClockReading};
use crate::profile::ProfileError;
use crate::registry::RegistryEntry;
use crate::types::{DriverKind, Outcome};

pub mod process;
pub mod simulated;
pub mod warmpool;

pub use process::{ProcessDriver, ProcessDriverConfig};
pub use simulated::{SimMode, SimulatedDriver};
pub use warmpool::{
    ExecutorState, WarmExecutor, WarmInner, WarmPoolConfig, WarmPoolDriver, WasteLedger,
};

pub const DEFAULT_MAX_PAYLOAD_BYTES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("function {0:?} has no executable image")]
    ImageMissing(String),
    #[error("payload of {len} bytes exceeds the {max} byte limit")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("failed to spawn {path}: {source}")]
    Spawn {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("executor I/O: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("{found} function routed to the {expected} driver")]
    WrongDriver {
        expected: DriverKind,
        found: DriverKind,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct ExecRequest<'a> {
    pub entry: &'a RegistryEntry,
    pub payload: &'a [u8],
    pub deadline: ClockReading,
    /// Index of the dispatcher worker running the call; selects the PRNG
    /// stream of the simulated driver.
    pub worker: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutput {
    pub output: Vec<u8>,
    pub startup_ns: u64,
    pub execution_ns: u64,
    pub outcome: Outcome,
    pub was_warm: bool,
}

impl ExecOutput {
    pub(crate) fn timed_out(startup_ns: u64) -> Self {
        ExecOutput {
            output: Vec::new(),
            startup_ns,
            execution_ns: 0,
            outcome: Outcome::Timeout,
            was_warm: false,
        }
    }

    /// Wall time the driver itself accounts for.
    pub fn busy_ns(&self) -> u64 {
        self.startup_ns.saturating_add(self.execution_ns)
    }
}

pub trait Driver: Send + Sync {
    fn kind(&self) -> DriverKind;

    fn execute(
        &self,
        req: ExecRequest<'_>,
    ) -> impl Future<Output = Result<ExecOutput, DriverError>> + Send;

    /// Executors (processes or simulated records) currently alive.
    fn live_executor_count(&self) -> usize;
}

pub(crate) fn check_driver(expected: DriverKind, entry: &RegistryEntry) -> Result<(), DriverError> {
    if entry.spec.driver == expected {
        Ok(())
    } else {
        Err(DriverError::WrongDriver {
            expected,
            found: entry.spec.driver,
        })
    }
}

pub(crate) fn check_payload(payload: &[u8], max: usize) -> Result<(), DriverError> {
    if payload.len() > max {
        Err(DriverError::PayloadTooLarge {
            len: payload.len(),
            max,
        })
    } else {
        Ok(())
    }
}

/// One driver of each kind, routed by the function's declared driver.
#[derive(Debug)]
pub struct DriverSet {
    pub process: ProcessDriver,
    pub simulated: Arc<SimulatedDriver>,
    pub warmpool: Arc<WarmPoolDriver>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LiveExecutors {
    pub process: usize,
    pub simulated: usize,
    pub warmpool: usize,
}

impl DriverSet {
    /// Builds the three drivers over one clock. The warm pool wraps `simulated`
    /// when its inner driver is simulated.
    pub fn new(
        clock: Arc<dyn Clock>,
        process: ProcessDriverConfig,
        simulated: SimulatedDriver,
        warmpool: WarmPoolConfig,
    ) -> Self {
        let simulated = Arc::new(simulated);
        DriverSet {
            process: ProcessDriver::new(process, clock.clone()),
            warmpool: Arc::new(WarmPoolDriver::new(warmpool, clock, simulated.clone())),
            simulated,
        }
    }

    pub async fn execute(&self, req: ExecRequest<'_>) -> Result<ExecOutput, DriverError> {
        match req.entry.spec.driver {
            DriverKind::Process => self.process.execute(req).await,
            DriverKind::Simulated => self.simulated.execute(req).await,
            DriverKind::Warmpool => self.warmpool.execute(req).await,
        }
    }

    pub fn live_executors(&self) -> LiveExecutors {
        LiveExecutors {
            process: self.process.live_executor_count(),
            simulated: self.simulated.live_executor_count(),
            warmpool: self.warmpool.live_executor_count(),
        }
    }
}

//! Core of a cold-start-only function platform.
//!
//! Every invocation gets a fresh executor which is gone by the time the
//! call returns. The crate holds the domain types, the executor drivers
//! (a real process driver, a latency-profile simulator and a warm-pool
//! baseline that books its idle resources), the on-disk function registry,
//! the FIFO dispatcher, and the percentile statistics used to report runs.

pub mod api;
pub mod clock;
pub mod dispatcher;
pub mod driver;
pub mod profile;
pub mod registry;
pub mod samples;
pub mod sim;
pub mod stats;
pub mod types;

pub use clock::{Clock, ClockReading, ManualClock, MonotonicClock};
pub use dispatcher::{DispatchError, Dispatcher, DispatcherConfig, Invocation, StatsSnapshot};
pub use driver::{DriverError, DriverSet, ExecOutput, ExecRequest};
pub use profile::{ProfileSet, RuntimeProfile};
pub use registry::{ProcessImage, Registry, RegistryEntry, RegistryError};
pub use samples::{BenchConfig, ConnectionMode, HttpMethod, SampleSet};
pub use stats::{BenchReport, Summary};
pub use types::{DriverKind, FunctionSpec, InvocationRecord, Outcome, SpecError};

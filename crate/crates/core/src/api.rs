//! Wire types shared by the gateway and its clients.

use serde::{Deserialize, Serialize};

use crate::dispatcher::StatsSnapshot;
use crate::driver::LiveExecutors;
use crate::types::{InvocationRecord, Outcome};

pub const HEADER_QUEUE_WAIT: &str = "x-queue-wait-ns";
pub const HEADER_STARTUP: &str = "x-startup-ns";
pub const HEADER_EXECUTION: &str = "x-execution-ns";
pub const HEADER_TOTAL: &str = "x-total-ns";
pub const HEADER_REQUEST_ID: &str = "x-request-id";
pub const HEADER_OUTCOME: &str = "x-outcome";
pub const HEADER_WARM: &str = "x-warm";

/// Body of every non-2xx gateway response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

/// `GET /stats`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    #[serde(flatten)]
    pub dispatcher: StatsSnapshot,
    pub live_executors: LiveExecutors,
}

/// Server-side timing carried in response headers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub queue_wait_ns: u64,
    pub startup_ns: u64,
    pub execution_ns: u64,
    pub total_ns: u64,
}

impl Timing {
    pub fn of(record: &InvocationRecord) -> Self {
        Timing {
            queue_wait_ns: record.queue_wait_ns,
            startup_ns: record.startup_ns,
            execution_ns: record.execution_ns,
            total_ns: record.total_ns,
        }
    }

    pub fn decomposes(&self) -> bool {
        self.total_ns
            >= self
                .queue_wait_ns
                .saturating_add(self.startup_ns)
                .saturating_add(self.execution_ns)
    }

    /// Reads the timing headers; `None` if any is missing or malformed.
    pub fn from_headers<'a>(get: impl Fn(&str) -> Option<&'a str>) -> Option<Self> {
        let num = |name: &str| get(name)?.trim().parse::<u64>().ok();
        Some(Timing {
            queue_wait_ns: num(HEADER_QUEUE_WAIT)?,
            startup_ns: num(HEADER_STARTUP)?,
            execution_ns: num(HEADER_EXECUTION)?,
            total_ns: num(HEADER_TOTAL)?,
        })
    }
}

/// HTTP status the gateway uses for an outcome.
pub fn status_of(outcome: Outcome) -> u16 {
    match outcome {
        Outcome::Ok => 200,
        Outcome::FunctionError => 500,
        Outcome::Timeout => 408,
        Outcome::Rejected => 429,
        Outcome::TransportError => 502,
    }
}

/// Inverse of [`status_of`] for the statuses a client classifies; anything
/// else is a transport-level failure.
pub fn outcome_of(status: u16) -> Outcome {
    match status {
        200 => Outcome::Ok,
        500 => Outcome::FunctionError,
        408 => Outcome::Timeout,
        429 => Outcome::Rejected,
        _ => Outcome::TransportError,
    }
}

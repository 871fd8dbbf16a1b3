use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MEMORY_MB: u64 = 128;
pub const MAX_NAME_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    Process,
    Simulated,
    Warmpool,
}

impl fmt::Display for DriverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriverKind::Process => "process",
            DriverKind::Simulated => "simulated",
            DriverKind::Warmpool => "warmpool",
        })
    }
}

/// Metadata of a deployed function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub driver: DriverKind,
    /// Label of the image this function runs. Defaults to the function name.
    #[serde(default)]
    pub image_ref: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_name: Option<String>,
    #[serde(default = "default_memory_mb")]
    pub memory_mb: u64,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_memory_mb() -> u64 {
    DEFAULT_MEMORY_MB
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("function name {0:?} must match [a-z0-9_-]{{1,64}}")]
    InvalidName(String),
    #[error("timeout_ms must be at least 1")]
    ZeroTimeout,
    #[error("memory_mb must be at least 1")]
    ZeroMemory,
    #[error("profile_name is required for the simulated driver")]
    MissingProfile,
    #[error("profile_name is only allowed for the simulated driver")]
    UnexpectedProfile,
    #[error("unknown runtime profile {0:?}")]
    UnknownProfile(String),
    #[error("the {0} driver needs an executable image")]
    MissingImage(DriverKind),
    #[error("the {0} driver does not take an executable image")]
    UnexpectedImage(DriverKind),
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= MAX_NAME_LEN
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

impl FunctionSpec {
    pub fn new(name: impl Into<String>, driver: DriverKind) -> Self {
        let name = name.into();
        FunctionSpec {
            image_ref: name.clone(),
            name,
            driver,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            profile_name: None,
            memory_mb: DEFAULT_MEMORY_MB,
        }
    }

    pub fn process(name: impl Into<String>) -> Self {
        Self::new(name, DriverKind::Process)
    }

    pub fn simulated(name: impl Into<String>, profile: impl Into<String>) -> Self {
        FunctionSpec {
            profile_name: Some(profile.into()),
            ..Self::new(name, DriverKind::Simulated)
        }
    }

    pub fn warmpool(name: impl Into<String>) -> Self {
        Self::new(name, DriverKind::Warmpool)
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    /// Checks the field invariants and fills `image_ref` when it was left empty.
    pub fn validate(mut self) -> Result<Self, SpecError> {
        if !is_valid_name(&self.name) {
            return Err(SpecError::InvalidName(self.name));
        }
        if self.timeout_ms == 0 {
            return Err(SpecError::ZeroTimeout);
        }
        if self.memory_mb == 0 {
            return Err(SpecError::ZeroMemory);
        }
        match (self.driver, &self.profile_name) {
            (DriverKind::Simulated, None) => return Err(SpecError::MissingProfile),
            (DriverKind::Process | DriverKind::Warmpool, Some(_)) => {
                return Err(SpecError::UnexpectedProfile)
            }
            _ => {}
        }
        if self.image_ref.is_empty() {
            self.image_ref = self.name.clone();
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    FunctionError,
    Timeout,
    Rejected,
    /// The load generator could not get a classified answer.
    TransportError,
}

impl Outcome {
    pub fn is_ok(self) -> bool {
        self == Outcome::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::FunctionError => "function_error",
            Outcome::Timeout => "timeout",
            Outcome::Rejected => "rejected",
            Outcome::TransportError => "transport_error",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Timing breakdown of one request. All durations are nanoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationRecord {
    pub request_id: u64,
    pub function: String,
    pub arrival: u64,
    pub queue_wait_ns: u64,
    pub startup_ns: u64,
    pub execution_ns: u64,
    pub total_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_setup_ns: Option<u64>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub was_warm: bool,
}

impl InvocationRecord {
    /// Sum of the components the total must cover.
    pub fn component_sum(&self) -> u64 {
        self.queue_wait_ns
            .saturating_add(self.startup_ns)
            .saturating_add(self.execution_ns)
    }

    pub fn decomposes(&self) -> bool {
        self.total_ns >= self.component_sum()
    }

    /// Latency with client-side connection setup taken out.
    pub fn service_ns(&self) -> u64 {
        self.total_ns
            .saturating_sub(self.connection_setup_ns.unwrap_or(0))
    }
}

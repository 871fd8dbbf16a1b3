use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use coldfaas_core::driver::{SimMode, WarmInner, WarmPoolConfig, DEFAULT_MAX_PAYLOAD_BYTES};
use coldfaas_core::DispatcherConfig;
use serde::{Deserialize, Serialize};

use crate::ServerError;

/// Whole-platform configuration, usually read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    pub gateway: GatewayConfig,
    pub dispatcher: DispatcherConfig,
    pub drivers: DriversConfig,
    pub warm_pool: WarmPoolSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: SocketAddr,
    /// Largest accepted invocation payload.
    pub max_body_bytes: usize,
    /// Largest accepted deploy request (spec plus image).
    pub max_deploy_bytes: usize,
    pub keep_alive: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_body_bytes: DEFAULT_MAX_PAYLOAD_BYTES,
            max_deploy_bytes: 256 << 20,
            keep_alive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriversConfig {
    /// Profile file; the shipped defaults when unset.
    pub profiles: Option<PathBuf>,
    pub registry_dir: PathBuf,
    pub simulated_mode: SimMode,
    pub seed: u64,
}

impl Default for DriversConfig {
    fn default() -> Self {
        DriversConfig {
            profiles: None,
            registry_dir: PathBuf::from("registry"),
            simulated_mode: SimMode::Realtime,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmPoolSettings {
    pub idle_timeout_ms: u64,
    /// Warm-start latency of the simulated inner driver.
    pub resume_ms: f64,
    pub inner: WarmInner,
}

impl Default for WarmPoolSettings {
    fn default() -> Self {
        let d = WarmPoolConfig::default();
        WarmPoolSettings {
            idle_timeout_ms: d.idle_timeout.as_millis() as u64,
            resume_ms: d.resume.as_secs_f64() * 1e3,
            inner: d.inner,
        }
    }
}

impl PlatformConfig {
    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let text = std::fs::read_to_string(path).map_err(|source| ServerError::Io {
            path: path.to_owned(),
            source,
        })?;
        let config: PlatformConfig = toml::from_str(&text)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        let bad = |m: &str| Err(ServerError::Config(m.to_owned()));
        if self.gateway.max_body_bytes == 0 {
            return bad("gateway.max_body_bytes must be positive");
        }
        if self.dispatcher.workers == 0 {
            return bad("dispatcher.workers must be at least 1");
        }
        if self.dispatcher.queue_capacity == Some(0) {
            return bad("dispatcher.queue_capacity must be positive");
        }
        if self.dispatcher.default_timeout_ms == 0 {
            return bad("dispatcher.default_timeout_ms must be positive");
        }
        if !(self.warm_pool.resume_ms.is_finite() && self.warm_pool.resume_ms >= 0.0) {
            return bad("warm_pool.resume_ms must be a non-negative number");
        }
        Ok(())
    }

    pub fn warm_pool_config(&self) -> WarmPoolConfig {
        let mut config = WarmPoolConfig {
            idle_timeout: Duration::from_millis(self.warm_pool.idle_timeout_ms),
            resume: Duration::from_secs_f64(self.warm_pool.resume_ms / 1e3),
            inner: self.warm_pool.inner.clone(),
            ..Default::default()
        };
        config.process.max_payload_bytes = self.gateway.max_body_bytes;
        config
    }
}

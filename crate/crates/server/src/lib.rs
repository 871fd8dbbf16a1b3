//! HTTP gateway: invocation, deployment, a no-op baseline and observability
//! endpoints over one dispatcher.

mod config;
mod routes;
mod server;

use std::path::PathBuf;
use std::sync::Arc;

use coldfaas_core::driver::{ProcessDriverConfig, SimulatedDriver, WarmInner};
use coldfaas_core::profile::ProfileError;
use coldfaas_core::{
    Clock, DispatchError, Dispatcher, DriverSet, ProfileSet, Registry, RegistryError,
};
use thiserror::Error;

pub use config::{DriversConfig, GatewayConfig, PlatformConfig, WarmPoolSettings};
pub use routes::router;
pub use server::{spawn, ServerHandle};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("binding {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// Everything a request handler needs.
#[derive(Debug)]
pub struct Platform {
    pub config: PlatformConfig,
    pub dispatcher: Arc<Dispatcher>,
}

impl Platform {
    pub fn build(config: PlatformConfig, clock: Arc<dyn Clock>) -> Result<Self, ServerError> {
        config.validate()?;
        let profiles = match &config.drivers.profiles {
            Some(path) => ProfileSet::load(path)?,
            None => ProfileSet::defaults(),
        };
        if let WarmInner::Simulated { profile } = &config.warm_pool.inner {
            profiles.get(profile)?;
        }
        let max_body = config.gateway.max_body_bytes;
        let simulated = SimulatedDriver::new(
            Arc::new(profiles),
            config.drivers.simulated_mode,
            config.drivers.seed,
            config.dispatcher.workers,
        )
        .with_clock(clock.clone())
        .with_max_payload(max_body);
        let process = ProcessDriverConfig {
            max_payload_bytes: max_body,
            ..Default::default()
        };
        let drivers = Arc::new(DriverSet::new(
            clock.clone(),
            process,
            simulated,
            config.warm_pool_config(),
        ));
        let registry = Arc::new(Registry::open(&config.drivers.registry_dir)?);
        let dispatcher = Arc::new(Dispatcher::new(
            config.dispatcher.clone(),
            registry,
            drivers,
            clock,
        )?);
        Ok(Platform { config, dispatcher })
    }
}

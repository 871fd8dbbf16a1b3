use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use coldfaas_core::MonotonicClock;
use hyper::server::conn::http1;
use hyper_util::rt::TokioIo;
use hyper_util::service::TowerToHyperService;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::{JoinHandle, JoinSet};

use crate::{router, Platform, PlatformConfig, ServerError};

/// A running gateway. Dropping the handle stops accepting connections;
/// [`ServerHandle::shutdown`] also waits for the listener and drains the warm pool.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    platform: Arc<Platform>,
    stop: watch::Sender<bool>,
    accept: Option<JoinHandle<()>>,
    reaper: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn platform(&self) -> &Arc<Platform> {
        &self.platform
    }

    pub async fn shutdown(mut self) {
        let _ = self.stop.send(true);
        if let Some(accept) = self.accept.take() {
            let _ = accept.await;
        }
        self.reaper.abort();
        let drained = self.platform.dispatcher.drivers().warmpool.drain().await;
        tracing::info!(drained, "gateway stopped");
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop.send(true);
        self.reaper.abort();
    }
}

/// Binds `config.gateway.listen`, starts serving and the warm-pool reaper.
pub async fn spawn(config: PlatformConfig) -> Result<ServerHandle, ServerError> {
    let listen = config.gateway.listen;
    let keep_alive = config.gateway.keep_alive;
    let platform = Arc::new(Platform::build(config, Arc::new(MonotonicClock))?);
    let listener = TcpListener::bind(listen)
        .await
        .map_err(|source| ServerError::Bind {
            addr: listen,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: listen,
        source,
    })?;
    let (stop, stopped) = watch::channel(false);
    let accept = tokio::spawn(accept_loop(
        listener,
        router(platform.clone()),
        keep_alive,
        stopped,
    ));
    let reaper = tokio::spawn(platform.dispatcher.drivers().warmpool.clone().run_reaper());
    tracing::info!(%addr, "gateway listening");
    Ok(ServerHandle {
        addr,
        platform,
        stop,
        accept: Some(accept),
        reaper,
    })
}

async fn accept_loop(
    listener: TcpListener,
    app: Router,
    keep_alive: bool,
    mut stop: watch::Receiver<bool>,
) {
    let mut conns = JoinSet::new();
    loop {
        tokio::select! {
            _ = stop.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    if let Err(e) = stream.set_nodelay(true) {
                        tracing::debug!(%peer, "set_nodelay: {e}");
                    }
                    let service = TowerToHyperService::new(app.clone());
                    let mut builder = http1::Builder::new();
                    builder.keep_alive(keep_alive);
                    conns.spawn(async move {
                        if let Err(e) = builder.serve_connection(TokioIo::new(stream), service).await {
                            tracing::debug!(%peer, "connection: {e}");
                        }
                    });
                }
                Err(e) => {
                    // usually fd exhaustion; back off instead of spinning
                    tracing::warn!("accept: {e}");
                    tokio::time::sleep(Duration::from_millis(10)).await;
                }
            },
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
        }
    }
    conns.shutdown().await;
}

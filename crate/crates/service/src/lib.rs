//! Survey backend: sessions that serve actively chosen queries, record
//! answers, update posteriors and export the result as a population entry.

pub mod api;
pub mod render;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fareopt_core::protocol::Protocol;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use api::{router, AppState};
pub use render::RenderConfig;
pub use session::{Event, ParticipantMeta, Phase, Session, SessionError, SessionResults, SurveyCondition};
pub use store::{SessionStore, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Event logs and snapshots; sessions live in memory only when absent.
    pub data_dir: Option<PathBuf>,
    pub protocol: Protocol<f64>,
    pub render: RenderConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8080, data_dir: None, protocol: Protocol::default(), render: RenderConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot read service config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot listen on {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server failed: {0}")]
    Server(String),
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let err = |message: String| ServiceError::Config { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

pub fn app(config: &ServiceConfig) -> Result<axum::Router, ServiceError> {
    let store = SessionStore::open(config.protocol.clone(), config.data_dir.clone())?;
    Ok(router(AppState { store: Arc::new(store), render: Arc::new(config.render.clone()) }))
}

/// Binds and serves until SIGINT or SIGTERM. Answers are on disk before they
/// are acknowledged, so shutdown loses nothing acknowledged.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let app = app(&config)?;
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServiceError::PortInUse(config.port),
        _ => ServiceError::Bind { addr: addr.clone(), message: e.to_string() },
    })?;
    let local: SocketAddr = listener.local_addr().map_err(|e| ServiceError::Server(e.to_string()))?;
    log::info!("listening on http://{local}");
    eprintln!("fareopt survey service listening on http://{local}");
    axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await.map_err(|e| ServiceError::Server(e.to_string()))
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}

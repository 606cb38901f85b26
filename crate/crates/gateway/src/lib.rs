//! Network face of the service: bearer-token sessions, a WebSocket event
//! stream for live dyad chat, and HTTP endpoints for recommendations,
//! narration, history and the action library.
//!
//! Start an in-process server with [`start`]; see [`protocol`] for frames and
//! [`http::router`] for the HTTP routes.

pub mod client;
pub mod config;
pub mod http;
pub mod protocol;
pub mod service;
mod ws;

use std::net::SocketAddr;
use std::sync::Arc;

use dyad_core::interpreter::ProviderError;
use dyad_core::library::LibraryError;
use dyad_core::narrative::NarrativeError;
use dyad_core::preference::PreferenceError;
use dyad_core::recommend::RecommendError;
use dyad_core::store::StoreError;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use config::GatewayConfig;
pub use service::Gateway;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("missing or unknown session token")]
    Unauthenticated,
    #[error("not allowed: {0}")]
    Unauthorized(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Narrative(#[from] NarrativeError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal: {0}")]
    Internal(String),
}

impl GatewayError {
    /// Stable machine-readable code carried in error frames.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Config(_) => "config",
            GatewayError::Schema(_) => "schema",
            GatewayError::Unauthenticated => "unauthenticated",
            GatewayError::Unauthorized(_) => "unauthorized",
            GatewayError::NotFound(_) => "not_found",
            GatewayError::Invalid(_) | GatewayError::Preference(_) | GatewayError::Library(_) => "invalid",
            GatewayError::Store(e) => match e {
                StoreError::NotMember { .. } => "unauthorized",
                StoreError::UnknownUser(_) | StoreError::UnknownConversation(_) | StoreError::UnknownRecord(_) => "not_found",
                StoreError::Ephemeral(_) => "ephemeral_record",
                StoreError::Io(_) | StoreError::Corrupt { .. } => "store",
                _ => "invalid",
            },
            GatewayError::Narrative(e) => match e {
                NarrativeError::UnknownAction(_) => "not_found",
                NarrativeError::Io(_) | NarrativeError::Storage { .. } => "store",
                _ => "invalid",
            },
            GatewayError::Recommend(e) => match e {
                RecommendError::EmptyLibrary => "empty_library",
                RecommendError::Provider(_) => "provider",
                RecommendError::UnknownAction(_) => "not_found",
                _ => "invalid",
            },
            GatewayError::Provider(_) => "provider",
            GatewayError::Io(_) => "store",
            GatewayError::Internal(_) => "internal",
        }
    }
}

/// A server bound to a local port and running in the background.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub gateway: Arc<Gateway>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn http_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// Waits until the server stops on its own (it normally never does).
    pub async fn wait(mut self) -> std::io::Result<()> {
        self.shutdown.take();
        match (&mut self.task).await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        // open sockets keep graceful shutdown waiting; give them a moment
        if tokio::time::timeout(std::time::Duration::from_secs(2), &mut self.task).await.is_err() {
            self.task.abort();
        }
    }
}

/// Builds the gateway from `config` and serves it on `config.listen`.
/// Use port 0 to pick a free port; the bound address is in the result.
pub async fn start(config: GatewayConfig) -> Result<RunningServer, GatewayError> {
    let gateway = Arc::new(Gateway::from_config(config)?);
    start_with(gateway).await
}

pub async fn start_with(gateway: Arc<Gateway>) -> Result<RunningServer, GatewayError> {
    let listener = TcpListener::bind(&gateway.config().listen).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = http::router(gateway.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                // a dropped sender (from `wait`) means run forever
                if rx.await.is_err() {
                    std::future::pending::<()>().await;
                }
            })
            .await
    });
    Ok(RunningServer { addr, gateway, shutdown: Some(tx), task })
}

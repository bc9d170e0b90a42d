//! HTTP front end for a neurovol store.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/datasets` | JSON array of dataset ids |
//! | GET | `/d/{id}/info` | manifest, verbatim |
//! | GET | `/d/{id}/scales/{key}/{chunk}` | raw chunk bytes |
//! | GET | `/d/{id}/ann/{layer}?blocks=&rev=` | annotation document |
//! | PUT | `/d/{id}/ann/{layer}?base=` | change set in, `{revision}` out |
//! | GET | `/d/{id}/ann/{layer}/export?format=&rev=` | JSON or CSV export |
//! | POST | `/d/{id}/retrain?layer=&c=&seed=` | cross-validation report |

mod error;
mod routes;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;

use neurovol::Store;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::ApiError;
pub use routes::{router, AnnotationDocument, RetrainResponse, WriteResponse};

/// Store root used when no path is configured.
pub const STORE_ROOT_ENV: &str = "NV_STORE_ROOT";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetFilter {
    All,
    Only(BTreeSet<String>),
}

impl DatasetFilter {
    pub fn allows(&self, id: &str) -> bool {
        match self {
            DatasetFilter::All => true,
            DatasetFilter::Only(ids) => ids.contains(id),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub root: PathBuf,
    pub datasets: DatasetFilter,
    /// Allowed CORS origins; `*` allows any.
    pub cors_origins: Vec<String>,
}

impl ServerConfig {
    pub fn new(bind: SocketAddr, root: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind,
            root: root.into(),
            datasets: DatasetFilter::All,
            cors_origins: vec!["*".into()],
        }
    }

    /// Root from `NV_STORE_ROOT`.
    pub fn from_env(bind: SocketAddr) -> Result<Self, ApiError> {
        let root = std::env::var_os(STORE_ROOT_ENV)
            .ok_or_else(|| ApiError::Startup(format!("{STORE_ROOT_ENV} is not set")))?;
        Ok(ServerConfig::new(bind, PathBuf::from(root)))
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Store,
    pub datasets: DatasetFilter,
}

/// A running server. Dropping the handle leaves the server running until
/// the runtime stops; call [`ServerHandle::shutdown`] for a clean stop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }

    /// Resolves when the server exits on its own.
    pub async fn wait(self) -> std::io::Result<()> {
        let ServerHandle { stop, task, .. } = self;
        let _keep = stop;
        task.await.map_err(std::io::Error::other)?
    }
}

/// Binds and starts serving on the current tokio runtime.
pub async fn serve(config: ServerConfig) -> Result<ServerHandle, ApiError> {
    let store = Store::open(&config.root).map_err(|e| ApiError::Startup(e.to_string()))?;
    let app = router(
        AppState {
            store,
            datasets: config.datasets.clone(),
        },
        &config.cors_origins,
    )?;
    let listener = TcpListener::bind(config.bind)
        .await
        .map_err(|e| ApiError::Startup(format!("cannot bind {}: {e}", config.bind)))?;
    let addr = listener.local_addr().map_err(|e| ApiError::Startup(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    log::info!("serving {} on http://{addr}", config.root.display());
    Ok(ServerHandle {
        addr,
        stop: Some(tx),
        task,
    })
}

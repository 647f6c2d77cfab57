//! HTTP job service: accepts captures, runs frame extraction and SfM through
//! external tools, trains a splat model and serves the result.
//!
//! Jobs move through `queued → extracting → sfm → training → ready`, or to
//! `failed` from any live state. Each job lives in its own directory under
//! `data_root/jobs/` with a `job.json` record, so a restarted service picks
//! up unfinished jobs at the stage they were in.

pub mod config;
pub mod job;
pub mod payload;
mod routes;
pub mod store;
pub mod tools;
mod worker;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Mutex};
use tokio::task::JoinHandle;
use tracing::info;

pub use config::{ConfigError, ServiceConfig};
pub use job::{Job, JobProgress, JobState, PayloadKind, Transition, MIN_FRAMES};
pub use routes::ApiError;
pub use store::JobStore;
pub use worker::{METRICS_FILE, MODEL_FILE, PREVIEW_FILE};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open data root {path}: {source}")]
    DataRoot { path: String, source: std::io::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

pub(crate) struct Shared {
    pub config: ServiceConfig,
    pub store: Arc<JobStore>,
    pub queue: mpsc::UnboundedSender<String>,
}

/// A running job pipeline: the store, the queue and its workers.
pub struct Service {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

impl Service {
    /// Opens the data root, re-queues unfinished jobs and spawns the
    /// workers. Must be called inside a Tokio runtime.
    pub fn start(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let root = &config.data_root;
        let data_root_err = |source| ServiceError::DataRoot {
            path: root.display().to_string(),
            source,
        };
        let uploads = root.join("uploads");
        if uploads.exists() {
            std::fs::remove_dir_all(&uploads).map_err(data_root_err)?;
        }
        let store = Arc::new(JobStore::open(root).map_err(data_root_err)?);
        let (tx, rx) = mpsc::unbounded_channel();
        for job in store.unfinished() {
            info!(job = %job.id, state = %job.state, "resuming job");
            let _ = tx.send(job.id);
        }
        let shared = Arc::new(Shared {
            config,
            store,
            queue: tx,
        });
        let queue = Arc::new(Mutex::new(rx));
        let workers = (0..shared.config.workers)
            .map(|_| tokio::spawn(worker::worker_loop(shared.clone(), queue.clone())))
            .collect();
        Ok(Service { shared, workers })
    }

    pub fn router(&self) -> Router {
        routes::router(self.shared.clone())
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.shared.config
    }

    pub fn store(&self) -> &JobStore {
        &self.shared.store
    }

    /// Binds the configured address.
    pub async fn bind(&self) -> Result<TcpListener, ServiceError> {
        let addr = self.shared.config.listen;
        TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })
    }

    /// Serves HTTP on `listener` until `shutdown` resolves, then stops the
    /// running stages; their jobs keep their state and resume on restart.
    pub async fn serve(
        self,
        listener: TcpListener,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServiceError> {
        let router = self.router();
        let result = axum::serve(listener, router)
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(ServiceError::Serve);
        self.shared.store.cancel_all();
        for w in &self.workers {
            w.abort();
        }
        result
    }
}

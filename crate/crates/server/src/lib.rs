//! HTTP service over mined shortcut hierarchies.
//!
//! Every `*.jsonl` file in the data directory is served as a dataset; see
//! [`registry`] for the companion files. Artifacts are mined on first use
//! and cached on disk.

mod error;
pub mod registry;
mod routes;
pub mod views;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;

pub use error::ApiError;
pub use registry::{Registry, ServerConfig};

pub type AppState = Arc<Registry>;

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/datasets", get(routes::list_datasets))
        .route("/datasets/{id}/shortcuts", get(routes::list_shortcuts))
        .route("/datasets/{id}/shortcuts/{sid}", get(routes::shortcut_detail))
        .route("/datasets/{id}/shortcuts/{sid}/instances", get(routes::shortcut_instances))
        .route("/datasets/{id}/whatif", post(routes::what_if))
        .route("/datasets/{id}/projection", get(routes::projection))
        .route("/datasets/{id}/removal", post(routes::removal))
        .with_state(registry)
}

/// Scans the data directory and serves until the process is stopped.
pub async fn serve(config: ServerConfig, addr: SocketAddr) -> std::io::Result<()> {
    let dir = config.data_dir.clone();
    let registry = Arc::new(Registry::scan(config)?);
    log::info!("{} datasets in {}", registry.list().len(), dir.display());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(registry)).await
}

//! Local render-and-edit service over a composed splat scene.
//!
//! Edits go through a single writer that publishes immutable snapshots;
//! renders read whichever snapshot is current and tag frames with its
//! revision.

pub mod error;
pub mod routes;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

pub use error::{ApiError, ApiResult};
pub use routes::router;
pub use state::{AppState, EditRequest, JobReport, JobStatus, ServiceConfig, Snapshot};

/// Binds `addr` and serves until the process exits.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

//! HTTP ingestion server: patients and sessions, sequential idempotent batch
//! ingest into the waveform store, incremental analytics and live
//! server-sent event streams.

mod error;
mod hub;
mod registry;
mod routes;
mod state;

use std::future::Future;

pub use error::ApiError;
pub use hub::{Hub, StreamEvent, Subscription, DEFAULT_SUBSCRIBER_QUEUE};
pub use registry::Registry;
pub use routes::router;
pub use state::{AppState, ServerConfig, StartupError, MAX_RATE_HZ, MIN_RATE_HZ};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

/// Where session segments live inside a server data directory.
pub fn segment_dir(data_dir: &std::path::Path) -> std::path::PathBuf {
    data_dir.join("segments")
}

/// Serve on `listener` until `shutdown` resolves. Live streams are ended on
/// shutdown so in-flight requests can complete; every acknowledged batch is
/// already durable.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone());
    let on_shutdown = state.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            on_shutdown.disconnect_streams();
        })
        .await
}

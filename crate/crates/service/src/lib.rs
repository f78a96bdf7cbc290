//! HTTP service and batch CLI around the feedback pipeline.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod store;

use std::sync::Arc;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use error::ServiceError;
pub use store::Store;

/// Opens the store and builds the pipeline described by `config`.
pub async fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let store = Store::open(&config.storage_path).map_err(|e| ServiceError::Data(e.to_string()))?;
    let pipeline = config.pipeline(Some(&config.storage_path.join(store::TRACE_FILE))).await?;
    Ok(AppState {
        pipeline: Arc::new(pipeline),
        store: Arc::new(store),
        corpus_seed: config.corpus_seed,
        debug: config.debug,
    })
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    state: AppState,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

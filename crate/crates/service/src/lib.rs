//! HTTP service and command-line driver for the need-analytics pipeline.

pub mod api;
pub mod cli;
pub mod state;

use std::sync::Arc;

use needgraph::pipeline::{Pipeline, PipelineError};

pub use api::router;
pub use state::AppState;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server failed: {0}")]
    Server(std::io::Error),
}

impl ServeError {
    pub fn code(&self) -> &'static str {
        match self {
            ServeError::Pipeline(e) => e.code(),
            ServeError::Bind { .. } => "bind",
            ServeError::Server(_) => "server",
        }
    }
}

/// Serves the API until interrupted.
pub async fn serve(pipeline: Pipeline) -> Result<(), ServeError> {
    let addr = pipeline.config().server.bind.clone();
    let state: Arc<AppState> = AppState::start(pipeline)?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Server)
}

//! Server startup and graceful shutdown.

use std::future::Future;
use std::sync::Arc;

use anyhow::Context;
use dar::EmbeddingIndex;
use log::info;
use tokio::net::TcpListener;

use crate::api::{router, AppState};
use crate::config::ServiceConfig;

/// Loads the index and backends named by `config`.
pub fn load_state(config: ServiceConfig) -> anyhow::Result<AppState> {
    let path = config.index.clone().context("no index configured (set `index` or DAR_INDEX)")?;
    let index = EmbeddingIndex::load(&path).with_context(|| format!("loading {}", path.display()))?;
    info!("loaded {} entries of dim {} from {}", index.len(), index.dim(), path.display());
    let engine = config.dar.engine(Arc::new(index))?;
    Ok(AppState::new(engine, config)?)
}

/// Serves until `shutdown` resolves; in-flight requests are completed.
pub async fn serve_with(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let addr = config.addr();
    let state = tokio::task::spawn_blocking(move || load_state(config)).await??;
    let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    info!("listening on http://{}", listener.local_addr()?);
    serve_with(listener, Arc::new(state), shutdown_signal()).await?;
    info!("shut down");
    Ok(())
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
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

//! HTTP retrieval service over an ingested catalog directory.
//!
//! Routes:
//! - `POST /api/search`
//! - `GET /api/frames/{frame_id}/neighbors?radius=N`
//! - `POST /api/submissions`, `GET /api/submissions`
//! - `GET /api/catalog`, `GET /api/spaces`, `GET /api/health`
//! - `GET /api/videos/{video_id}/transcript`
//! - `/media/...` from `static_root`, everything else from `console_root`

pub mod api;
pub mod config;
pub mod embedder;
pub mod error;
pub mod search;

use std::sync::{Arc, RwLock};

use tokio::sync::Mutex;

use vidseek_core::engine::{Engine, EngineOptions};
use vidseek_core::store::{CatalogDir, StoreError, SubmissionLog};

pub use api::router;
pub use config::{Config, ConfigError, Endpoint};
pub use embedder::{EmbedderKind, Embedders};
pub use error::ApiError;
pub use search::{run_search, SearchBody, SearchRequest, ServiceTimings};

/// Shared service state. The engine is opened on first use so the service
/// can start before the catalog is ingested (requests get 503 until then).
pub struct AppState {
    pub config: Config,
    pub dir: CatalogDir,
    pub embedders: Embedders,
    pub submissions: SubmissionLog,
    engine: RwLock<Option<Arc<Engine>>>,
    loading: Mutex<()>,
}

impl AppState {
    pub fn new(config: Config, dir: CatalogDir) -> Result<Self, StoreError> {
        let submissions = SubmissionLog::open(dir.submissions_path())?;
        Ok(Self {
            embedders: Embedders::from_config(&config),
            config,
            dir,
            submissions,
            engine: RwLock::new(None),
            loading: Mutex::new(()),
        })
    }

    fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            palette_size: self.config.palette_size,
            nprobe: self.config.nprobe,
        }
    }

    fn cached(&self) -> Option<Arc<Engine>> {
        self.engine.read().expect("engine lock").clone()
    }

    /// The loaded engine, opening it from disk if needed.
    pub async fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        if let Some(e) = self.cached() {
            return Ok(e);
        }
        let _guard = self.loading.lock().await;
        if let Some(e) = self.cached() {
            return Ok(e);
        }
        if !self.dir.is_ingested() {
            return Err(ApiError::Unavailable(format!(
                "catalog not ingested at {}",
                self.dir.root().display()
            )));
        }
        let dir = self.dir.clone();
        let options = self.engine_options();
        let engine = tokio::task::spawn_blocking(move || Engine::open(dir, options))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))?
            .map_err(|e| ApiError::Internal(format!("loading catalog: {e}")))?;
        let engine = Arc::new(engine);
        *self.engine.write().expect("engine lock") = Some(engine.clone());
        tracing::info!(
            frames = engine.catalog().num_frames(),
            spaces = engine.catalog().spaces().len(),
            "catalog loaded"
        );
        Ok(engine)
    }

    /// Drops the cached engine so the next request reloads from disk.
    pub fn invalidate(&self) {
        *self.engine.write().expect("engine lock") = None;
    }
}

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: Config, dir: CatalogDir) -> anyhow::Result<()> {
    let bind = config.bind;
    let state = Arc::new(AppState::new(config, dir)?);
    if let Err(e) = state.engine().await {
        tracing::warn!(error = %e, "starting without a loaded catalog");
    }
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

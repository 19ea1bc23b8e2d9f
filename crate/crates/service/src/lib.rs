//! HTTP service for iterative annotation rounds: batches drawn by weighted-bin
//! sampling over a retrainable scorer, label intake, numbered segment views,
//! object naming and live inter-rater reliability.

mod api;
pub mod error;
pub mod scorer;
pub mod store;

use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::routing::{get, post};
use axum::Router;
use segclf_core::ops::SynonymDictionary;

pub use error::ApiError;
pub use scorer::{BoostedScorer, Scorer, Scoring};
pub use store::{Event, Store};

pub const EVENT_LOG: &str = "events.jsonl";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Directory holding the event log; `None` keeps everything in memory.
    pub state_dir: Option<PathBuf>,
    /// Root of every batch seed.
    pub seed: u64,
    /// Accept labels for images that were not served to the coder.
    pub free_labeling: bool,
    /// Served under `/assets/` so that relative `image_uri`s resolve.
    pub assets: Option<PathBuf>,
    pub dictionary: SynonymDictionary,
}

impl ServiceConfig {
    pub fn new(state_dir: Option<PathBuf>, seed: u64) -> Self {
        ServiceConfig {
            state_dir,
            seed,
            free_labeling: false,
            assets: None,
            dictionary: SynonymDictionary::bundled(),
        }
    }
}

pub struct AppState {
    store: Mutex<Store>,
    scorer: Arc<dyn Scorer>,
    retraining: AtomicBool,
    config: ServiceConfig,
}

impl AppState {
    /// Replays the event log (if any) and prepares the service.
    pub fn open(config: ServiceConfig, scorer: Arc<dyn Scorer>) -> Result<Arc<Self>, ApiError> {
        let log = match &config.state_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| ApiError::Internal(format!("{}: {e}", dir.display())))?;
                Some(dir.join(EVENT_LOG))
            }
            None => None,
        };
        let store = Store::open(log.as_deref(), config.seed, config.free_labeling)?;
        Ok(Arc::new(AppState {
            store: Mutex::new(store),
            scorer,
            retraining: AtomicBool::new(false),
            config,
        }))
    }

    pub fn store(&self) -> MutexGuard<'_, Store> {
        // A panic while holding the lock cannot leave a half-applied event:
        // events are applied only after they are durable.
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", post(api::register))
        .route("/status", get(api::status))
        .route("/rounds/next", get(api::next_batch))
        .route("/rounds/history", get(api::history))
        .route("/labels", post(api::label))
        .route("/model/retrain", post(api::retrain))
        .route("/images/{id}/segments", get(api::segments))
        .route("/object-naming", post(api::naming))
        .route("/object-naming/report", get(api::naming_report))
        .route("/reliability", get(api::reliability))
        .route("/assets/{*path}", get(api::asset))
        .fallback(api::not_found)
        .layer(axum::middleware::map_response_with_state(state.clone(), api::stamp))
        .with_state(state)
}

//! HTTP front end over `tacos-core`.
//!
//! One request classifies a query and routes the label; unsafe decisions
//! are written to the audit log before the response goes out. The same
//! service hosts the annotation API used by reviewers and read-only access
//! to experiment bundles. Every JSON body uses [`MEDIA_TYPE`].
//!
//! There is no authentication. Annotators identify themselves with the
//! `X-Annotator-Id` header.

mod api;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use tacos_core::classifier::{build_backend, Classifier};
use tacos_core::dataset::{AnnotationStore, Pool};
use tacos_core::routing::{AuditStore, RoutingPolicy, TemplateSet};
use tacos_core::Taxonomy;

pub use api::{
    router, ApiError, ClassifyRouteRequest, ClassifyRouteResponse, ErrorBody, ItemList, LatencyBreakdown, NewItem,
    NewItems, Progress, TaxonomyLeaf, TaxonomyView,
};
pub use config::GatewayConfig;

pub const MEDIA_TYPE: &str = "application/vnd.tacos.v1+json";
pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    Config(String),
    #[error("startup check failed: {0}")]
    Startup(String),
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
}

/// Immutable routing inputs. Requests hold an `Arc` to the snapshot they
/// started with, so a reload never changes a request midway.
pub struct Snapshot {
    pub taxonomy: Taxonomy,
    pub policy: RoutingPolicy,
    pub templates: TemplateSet,
    pub backend: Arc<dyn Classifier>,
}

impl std::fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Snapshot")
            .field("taxonomy", &self.taxonomy.version)
            .field("policy", &self.policy.version)
            .field("backend", &self.backend.id())
            .finish()
    }
}

impl Snapshot {
    /// Loads and cross-checks taxonomy, policy, templates and the active backend.
    pub fn load(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let startup = |what: &str, e: &dyn std::fmt::Display| GatewayError::Startup(format!("{what}: {e}"));
        let taxonomy = match &config.taxonomy {
            Some(p) => Taxonomy::load_file(p).map_err(|e| startup("taxonomy", &e))?,
            None => Taxonomy::canonical(),
        };
        let policy = match &config.policy {
            Some(p) => RoutingPolicy::load_file(p).map_err(|e| startup("policy", &e))?,
            None => RoutingPolicy::default_policy(),
        };
        let templates = match &config.templates {
            Some(p) => TemplateSet::load_file(p).map_err(|e| startup("templates", &e))?,
            None => TemplateSet::default_templates(),
        };
        policy
            .validate(&taxonomy, Some(&templates))
            .map_err(|e| startup("policy", &e))?;
        let backend_config = config
            .backends
            .iter()
            .find(|b| b.id == config.active_backend)
            .ok_or_else(|| GatewayError::Startup(format!("active backend {:?} is not configured", config.active_backend)))?;
        if backend_config.labels.is_some() {
            return Err(GatewayError::Startup(
                "the active backend must cover the whole taxonomy (no `labels` restriction)".into(),
            ));
        }
        let backend = build_backend(backend_config, &taxonomy).map_err(|e| startup("backend", &e))?;
        Ok(Self {
            taxonomy,
            policy,
            templates,
            backend: Arc::from(backend),
        })
    }
}

/// Shared service state.
pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    pub audit: AuditStore,
    pub annotations: Option<Mutex<AnnotationStore>>,
    pub reports: Option<PathBuf>,
    pub timeout: Duration,
    pub expose_scores: bool,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("snapshot", &self.snapshot())
            .field("reports", &self.reports)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl AppState {
    /// Validates everything the config references. Blocking; call it before
    /// entering the async runtime or from a blocking task.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        if !config.request_timeout_secs.is_finite() || config.request_timeout_secs <= 0.0 {
            return Err(GatewayError::Config("request_timeout_secs must be positive".into()));
        }
        let snapshot = Snapshot::load(config)?;
        let audit = AuditStore::open(&config.audit_log)
            .map_err(|e| GatewayError::Startup(format!("audit log: {e}")))?
            .retain_text(config.retain_query_text);
        let annotations = match &config.dataset {
            Some(path) => {
                let pool = Pool::read(path).map_err(|e| GatewayError::Startup(format!("dataset: {e}")))?;
                let log = config.annotation_log_path().expect("dataset is set");
                let store = AnnotationStore::open(snapshot.taxonomy.clone(), pool, log)
                    .map_err(|e| GatewayError::Startup(format!("annotation log: {e}")))?;
                Some(store)
            }
            None => None,
        };
        if let Some(r) = &config.reports {
            if !r.is_dir() {
                return Err(GatewayError::Startup(format!("reports directory {} does not exist", r.display())));
            }
        }
        Ok(Self::new(snapshot, audit)
            .with_annotations(annotations)
            .with_reports(config.reports.clone())
            .with_timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .with_scores(config.expose_scores))
    }

    pub fn new(snapshot: Snapshot, audit: AuditStore) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            audit,
            annotations: None,
            reports: None,
            timeout: Duration::from_secs(10),
            expose_scores: false,
        }
    }

    pub fn with_annotations(mut self, store: Option<AnnotationStore>) -> Self {
        self.annotations = store.map(Mutex::new);
        self
    }

    pub fn with_reports(mut self, dir: Option<PathBuf>) -> Self {
        self.reports = dir;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_scores(mut self, expose: bool) -> Self {
        self.expose_scores = expose;
        self
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Swaps in a new snapshot. In-flight requests finish on the old one.
    pub fn replace_snapshot(&self, next: Snapshot) -> Arc<Snapshot> {
        let mut guard = self.snapshot.write().unwrap_or_else(|p| p.into_inner());
        std::mem::replace(&mut *guard, Arc::new(next))
    }
}

/// Loads `config` and serves until interrupted. `on_ready` gets the bound
/// address once the listener is up.
pub fn serve(config: GatewayConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<(), GatewayError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        let addr = listener.local_addr()?;
        tracing::info!(%addr, "gateway listening");
        on_ready(addr);
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    drop(runtime);
    // remote backends own blocking HTTP clients, which must be dropped
    // outside the runtime
    drop(state);
    result.map_err(GatewayError::from)
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tacos_core::classifier::BackendConfig;

use crate::GatewayError;

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_timeout() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

/// Service configuration, read from TOML. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Taxonomy definition; the built-in canonical taxonomy if absent.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub policy: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub active_backend: String,
    pub backends: Vec<BackendConfig>,
    pub audit_log: PathBuf,
    /// Keep raw text in audit records (never for digest-only classes).
    #[serde(default = "default_true")]
    pub retain_query_text: bool,
    /// Pool file backing the annotation API; the API is disabled without it.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Revision log; defaults to `<dataset>.revisions.jsonl`.
    #[serde(default)]
    pub annotation_log: Option<PathBuf>,
    /// Directory of experiment bundles served by the reports API.
    #[serde(default)]
    pub reports: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    /// Include score vectors in classify responses.
    #[serde(default)]
    pub expose_scores: bool,
}

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.taxonomy,
            &mut self.policy,
            &mut self.templates,
            &mut self.dataset,
            &mut self.annotation_log,
            &mut self.reports,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.audit_log);
        for b in &mut self.backends {
            b.resolve_paths(base);
        }
    }

    pub fn annotation_log_path(&self) -> Option<PathBuf> {
        self.annotation_log.clone().or_else(|| {
            self.dataset.as_ref().map(|d| {
                let mut name = d.file_name().unwrap_or_default().to_os_string();
                name.push(".revisions.jsonl");
                d.with_file_name(name)
            })
        })
    }
}

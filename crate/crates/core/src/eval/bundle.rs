//! Report bundle layout:
//!
//! ```text
//! {output}/{kind}-{digest12}/
//!   bundle.json            manifest: config, digests, seeds, runs
//!   metrics.json           run id -> EvalReport
//!   latency.json           run id -> LatencyReport (the only nondeterministic file)
//!   confusion/{run}.csv    gold x predicted grid
//!   plots/*.json           plot data per figure analog
//!   predictions/{run}.jsonl
//!   data/{plan}/...        exported splits
//! ```

use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const BUNDLE_SCHEMA: &str = "tacos.bundle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRun {
    pub run_id: String,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    pub n_items: usize,
    /// Test items the backend could not classify (unparseable answers).
    pub failed_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema: String,
    pub version: u32,
    pub kind: String,
    pub name: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub pool_digest: String,
    pub test_set_size: usize,
    pub test_set_digest: String,
    pub runs: Vec<BundleRun>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    /// Directory name, used as the bundle's handle.
    pub id: String,
    pub kind: String,
    pub name: String,
    pub config_digest: String,
    pub runs: usize,
}

/// Bundles directly under `root`, sorted by id. Directories without a
/// readable manifest are skipped.
pub fn list_bundles(root: &Path) -> Result<Vec<BundleSummary>, EvalError> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(EvalError::io(root))? {
        let entry = entry.map_err(EvalError::io(root))?;
        let manifest = entry.path().join("bundle.json");
        let Ok(text) = std::fs::read_to_string(&manifest) else {
            continue;
        };
        let Ok(m) = serde_json::from_str::<BundleManifest>(&text) else {
            continue;
        };
        out.push(BundleSummary {
            id: entry.file_name().to_string_lossy().into_owned(),
            kind: m.kind,
            name: m.name,
            config_digest: m.config_digest,
            runs: m.runs.len(),
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Resolves `file` inside bundle `id` under `root`, refusing anything that
/// would escape the bundle directory. `None` if it does not exist.
pub fn open_bundle_file(root: &Path, id: &str, file: &str) -> Option<PathBuf> {
    let safe = |p: &Path| !p.as_os_str().is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)));
    if !safe(Path::new(id)) || Path::new(id).components().count() != 1 || !safe(Path::new(file)) {
        return None;
    }
    let dir = root.join(id);
    if !dir.join("bundle.json").is_file() {
        return None;
    }
    let path = dir.join(file);
    let canon = path.canonicalize().ok()?;
    if !canon.starts_with(dir.canonicalize().ok()?) || !canon.is_file() {
        return None;
    }
    Some(canon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_traversal() {
        let dir = tempfile::tempdir().unwrap();
        let b = dir.path().join("distribution-abc");
        std::fs::create_dir_all(b.join("plots")).unwrap();
        std::fs::write(b.join("bundle.json"), "{}").unwrap();
        std::fs::write(b.join("plots/x.json"), "{}").unwrap();
        std::fs::write(dir.path().join("secret"), "s").unwrap();
        assert!(open_bundle_file(dir.path(), "distribution-abc", "plots/x.json").is_some());
        assert!(open_bundle_file(dir.path(), "distribution-abc", "../secret").is_none());
        assert!(open_bundle_file(dir.path(), "..", "secret").is_none());
        assert!(open_bundle_file(dir.path(), "distribution-abc", "/etc/passwd").is_none());
        assert!(open_bundle_file(dir.path(), "distribution-abc", "missing.json").is_none());
        // unreadable manifest: skipped from listing
        assert!(list_bundles(dir.path()).unwrap().is_empty());
    }
}

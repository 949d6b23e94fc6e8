use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, DatasetError, LabeledQuery, Pool, Provenance};

/// One line of a corpus input file. A first line carrying a `schema` key is
/// treated as a header and skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
    /// Pre-existing label, kept as-is (e.g. for seed sets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub read: usize,
    pub added: usize,
    pub duplicates: usize,
    /// (file, 1-based line, reason)
    pub skipped: Vec<(PathBuf, usize, String)>,
}

/// Reads corpus files into `pool`. Malformed records are skipped and
/// reported; duplicates by normalized text are dropped.
pub fn ingest(pool: &mut Pool, files: &[PathBuf]) -> Result<IngestReport, DatasetError> {
    let mut report = IngestReport {
        read: 0,
        added: 0,
        duplicates: 0,
        skipped: Vec::new(),
    };
    for path in files {
        ingest_file(pool, path, &mut report)?;
    }
    for (file, line, reason) in &report.skipped {
        tracing::warn!(file = %file.display(), line, %reason, "skipped corpus record");
    }
    if pool.is_empty() {
        return Err(DatasetError::EmptyPool);
    }
    Ok(report)
}

fn ingest_file(pool: &mut Pool, path: &Path, report: &mut IngestReport) -> Result<(), DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let default_source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                report.skipped.push((path.to_path_buf(), i + 1, e.to_string()));
                continue;
            }
        };
        if i == 0 && value.get("schema").is_some() {
            continue;
        }
        report.read += 1;
        let record: CorpusRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                report.skipped.push((path.to_path_buf(), i + 1, e.to_string()));
                continue;
            }
        };
        if record.text.trim().is_empty() {
            report.skipped.push((path.to_path_buf(), i + 1, "empty text".into()));
            continue;
        }
        let source = record.source.as_deref().unwrap_or(&default_source);
        let mut item = LabeledQuery::new(&record.text, source, Provenance::Collected);
        item.locale = record.locale;
        item.label_id = record.label_id;
        if pool.insert(item) {
            report.added += 1;
        } else {
            report.duplicates += 1;
        }
    }
    Ok(())
}

//! Metrics, confusion matrices, latency and the replication experiments.
//!
//! Macro averages run over classes present in gold. AUPRC is average
//! precision (step summation, tied scores entering together), one-vs-rest
//! per class.

mod bundle;
mod confusion;
mod experiment;
mod latency;
mod metrics;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::Prediction;
use crate::dataset::DatasetError;
use crate::taxonomy::{LabelMapping, MappingError, Taxonomy};

pub use bundle::{list_bundles, open_bundle_file, BundleManifest, BundleRun, BundleSummary};
pub use confusion::{confusion, ConfusionMatrix, ConfusionPlotData};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutcome, Trainer};
pub use latency::{benchmark_latency, percentile, LatencyReport};
pub use metrics::{
    average_precision, evaluate, evaluate_with_groups, group_metrics, toxic_groups, ClassMetrics, EvalReport,
    GroupBlock, GroupSpec, MetricBlock,
};

pub const PREDICTIONS_SCHEMA: &str = "tacos.predictions";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{gold} gold labels but {predictions} predictions")]
    LengthMismatch { gold: usize, predictions: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("item {index}: expected {expected} scores, got {got}")]
    Arity { index: usize, expected: usize, got: usize },
    #[error("item {index}: label {label:?} not in taxonomy")]
    UnknownLabel { index: usize, label: String },
    #[error("group {group:?}: label {label:?} not in taxonomy")]
    UnknownGroupLabel { group: String, label: String },
    #[error("{queries} queries cannot cover a warmup of {warmup}")]
    TooFewQueries { queries: usize, warmup: usize },
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("backend {backend:?} failed: {message}")]
    Backend { backend: String, message: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Format { path: String, line: usize, message: String },
}

impl EvalError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
        move |source| EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: String,
    pub predicted: String,
    pub scores: Vec<f64>,
}

impl PredictionRecord {
    pub fn prediction(&self, backend_id: &str) -> Prediction {
        Prediction {
            label_id: self.predicted.clone(),
            scores: self.scores.clone(),
            latency: 0.0,
            backend_id: backend_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionsHeader {
    pub schema: String,
    pub version: u32,
    pub taxonomy: String,
    pub backend_id: String,
}

pub fn write_predictions(
    path: &Path,
    taxonomy: &Taxonomy,
    backend_id: &str,
    records: &[PredictionRecord],
) -> Result<(), EvalError> {
    let file = File::create(path).map_err(EvalError::io(path))?;
    let mut w = BufWriter::new(file);
    let header = PredictionsHeader {
        schema: PREDICTIONS_SCHEMA.into(),
        version: 1,
        taxonomy: taxonomy.version.clone(),
        backend_id: backend_id.into(),
    };
    let mut line = serde_json::to_string(&header).expect("header serializes");
    for r in records {
        line.push('\n');
        line.push_str(&serde_json::to_string(r).expect("record serializes"));
    }
    line.push('\n');
    w.write_all(line.as_bytes()).map_err(EvalError::io(path))?;
    w.flush().map_err(EvalError::io(path))
}

/// Reads a predictions file. The header is optional.
pub fn read_predictions(path: &Path) -> Result<(Option<PredictionsHeader>, Vec<PredictionRecord>), EvalError> {
    let file = File::open(path).map_err(EvalError::io(path))?;
    let mut header = None;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(EvalError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt = |message: String| EvalError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        if i == 0 && line.contains("\"schema\"") {
            let h: PredictionsHeader = serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?;
            if h.schema != PREDICTIONS_SCHEMA {
                return Err(fmt(format!("unexpected schema {:?}", h.schema)));
            }
            header = Some(h);
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| fmt(e.to_string()))?);
    }
    Ok((header, out))
}

/// Moves predictions from `source`'s frame into `target`'s: the label is
/// mapped and scores are summed per target class.
pub fn collapse_predictions(
    predictions: &[Prediction],
    mapping: &LabelMapping,
    source: &Taxonomy,
    target: &Taxonomy,
) -> Result<Vec<Prediction>, EvalError> {
    predictions
        .iter()
        .map(|p| {
            Ok(Prediction {
                label_id: mapping.map(&p.label_id)?.to_string(),
                scores: mapping.collapse_scores(source, target, &p.scores)?,
                latency: p.latency,
                backend_id: p.backend_id.clone(),
            })
        })
        .collect()
}

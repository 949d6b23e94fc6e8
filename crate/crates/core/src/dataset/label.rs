use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::{DatasetError, Pool, Provenance};
use crate::classifier::{Classifier, ClassifyError};

#[derive(Debug, Clone)]
pub struct LabelOptions {
    /// Concurrent backend calls.
    pub concurrency: usize,
    /// Pool is written here after every batch.
    pub checkpoint: Option<PathBuf>,
    pub batch_size: usize,
    /// Also retry items flagged by an earlier run.
    pub retry_flagged: bool,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self {
            concurrency: 8,
            checkpoint: None,
            batch_size: 64,
            retry_flagged: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelReport {
    pub labeled: usize,
    pub flagged: usize,
    /// Items that already carried a label and were left alone.
    pub skipped: usize,
}

/// Labels every unlabeled, unremoved item with `classifier`.
///
/// Calls run concurrently in batches; results are applied by this thread
/// alone. If the endpoint becomes unavailable the successful results of the
/// current batch are applied, the checkpoint is written and the error is
/// returned, so a rerun picks up where this one stopped.
pub fn llm_label(
    pool: &mut Pool,
    classifier: &dyn Classifier,
    opts: &LabelOptions,
) -> Result<LabelReport, DatasetError> {
    let mut report = LabelReport::default();
    let todo: Vec<(String, String)> = pool
        .iter()
        .filter(|i| !i.is_removed())
        .filter(|i| {
            let pending = i.label_id.is_none() && (!i.labeling_failed || opts.retry_flagged);
            if !pending {
                report.skipped += 1;
            }
            pending
        })
        .map(|i| (i.id.clone(), i.text.clone()))
        .collect();

    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| DatasetError::InvalidPlan(e.to_string()))?;

    for batch in todo.chunks(opts.batch_size.max(1)) {
        let results: Vec<Result<String, ClassifyError>> = threads.install(|| {
            batch
                .par_iter()
                .map(|(_, text)| classifier.classify(text).map(|p| p.label_id))
                .collect()
        });
        let mut outage = None;
        for ((id, _), result) in batch.iter().zip(results) {
            let item = pool.get_mut(id).expect("ids taken from this pool");
            match result {
                Ok(label) => {
                    item.label_id = Some(label);
                    item.provenance = Provenance::LlmLabeled;
                    item.labeling_failed = false;
                    report.labeled += 1;
                }
                Err(e) if e.is_unavailable() => {
                    outage.get_or_insert(e);
                }
                Err(e) => {
                    tracing::warn!(item = %id, error = %e, "labeling failed");
                    item.labeling_failed = true;
                    report.flagged += 1;
                }
            }
        }
        if let Some(path) = &opts.checkpoint {
            pool.write(path)?;
        }
        if let Some(source) = outage {
            return Err(DatasetError::EndpointUnavailable {
                labeled: report.labeled,
                source,
            });
        }
    }
    Ok(report)
}

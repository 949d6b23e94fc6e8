use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classifier::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    /// Leading calls excluded from the statistics.
    pub warmup: usize,
    /// Post-warmup wall-clock seconds, successful calls only.
    pub samples: Vec<f64>,
    pub p50: f64,
    pub p95: f64,
    pub mean: f64,
    pub failures: usize,
}

/// Percentile with linear interpolation between closest ranks; `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl LatencyReport {
    /// Summarizes `latencies`, dropping the first `warmup`.
    pub fn from_samples(backend_id: &str, shots: Option<usize>, latencies: &[f64], warmup: usize, failures: usize) -> Self {
        let samples: Vec<f64> = latencies.iter().skip(warmup).copied().collect();
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = if samples.is_empty() {
            f64::NAN
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        Self {
            backend_id: backend_id.to_string(),
            shots,
            warmup: warmup.min(latencies.len()),
            p50: percentile(&sorted, 0.5),
            p95: percentile(&sorted, 0.95),
            mean,
            samples,
            failures,
        }
    }
}

/// Times `backend.classify` sequentially over `queries`. Failed calls are
/// counted and left out of the samples.
pub fn benchmark_latency<S: AsRef<str>>(
    backend: &dyn Classifier,
    queries: &[S],
    warmup: usize,
) -> Result<LatencyReport, EvalError> {
    if queries.len() <= warmup {
        return Err(EvalError::TooFewQueries {
            queries: queries.len(),
            warmup,
        });
    }
    let mut latencies = Vec::with_capacity(queries.len());
    let mut failures = 0;
    for (i, q) in queries.iter().enumerate() {
        let start = Instant::now();
        let result = backend.classify(q.as_ref());
        let elapsed = start.elapsed().as_secs_f64();
        match result {
            Ok(_) if i >= warmup => latencies.push(elapsed),
            Ok(_) => {}
            Err(e) => {
                tracing::warn!(backend = backend.id(), query = i, error = %e, "benchmark call failed");
                if i >= warmup {
                    failures += 1;
                }
            }
        }
    }
    let mut report = LatencyReport::from_samples(backend.id(), backend.shots(), &latencies, 0, failures);
    report.warmup = warmup;
    Ok(report)
}

use std::fmt;
use std::sync::Arc;

use super::{check_scores, timed, ClassifyError, Classifier, Prediction, ScoreKind};
use crate::taxonomy::Taxonomy;

type ScoreFn = dyn Fn(&str) -> Result<Vec<f64>, ClassifyError> + Send + Sync;

/// In-process backend driven by a scoring closure. Used as an encoder stand-in.
#[derive(Clone)]
pub struct ScoreFnClassifier {
    id: String,
    taxonomy: Taxonomy,
    kind: ScoreKind,
    score: Arc<ScoreFn>,
}

impl fmt::Debug for ScoreFnClassifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreFnClassifier")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl ScoreFnClassifier {
    pub fn new<F>(id: &str, taxonomy: Taxonomy, kind: ScoreKind, score: F) -> Self
    where
        F: Fn(&str) -> Result<Vec<f64>, ClassifyError> + Send + Sync + 'static,
    {
        Self {
            id: id.to_string(),
            taxonomy,
            kind,
            score: Arc::new(score),
        }
    }

    /// Returns the same uniform distribution for every query.
    pub fn uniform(id: &str, taxonomy: Taxonomy) -> Self {
        let n = taxonomy.len();
        Self::new(id, taxonomy, ScoreKind::Probabilistic, move |_| {
            Ok(vec![1.0 / n as f64; n])
        })
    }
}

impl Classifier for ScoreFnClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    fn score_kind(&self) -> ScoreKind {
        self.kind
    }

    fn classify(&self, text: &str) -> Result<Prediction, ClassifyError> {
        let (scores, latency) = timed(|| (self.score)(text));
        let mut scores = scores?;
        if self.kind == ScoreKind::Probabilistic {
            // tolerate rounding from the closure
            let sum: f64 = scores.iter().sum();
            if sum > 0.0 && (sum - 1.0).abs() <= 1e-9 {
                scores.iter_mut().for_each(|s| *s /= sum);
            }
        }
        check_scores(&scores, self.taxonomy.len(), self.kind)?;
        Prediction::from_scores(&self.taxonomy, scores, latency, &self.id)
    }
}

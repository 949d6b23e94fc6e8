//! Classifier backends behind one contract.
//!
//! Every backend returns a [`Prediction`] whose score vector is indexed by
//! the canonical leaf order of the backend's taxonomy. Probabilistic
//! backends return scores summing to one; rule-based and prompted backends
//! return one-hot vectors. The predicted label is always the argmax of the
//! scores, ties going to the lowest canonical index.

mod config;
mod keyword;
mod limit;
mod naive_bayes;
pub mod prompt;
pub mod remote;
mod stub;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::taxonomy::Taxonomy;

pub use config::{build_backend, read_labeled_lines, BackendConfig, BackendKind};
pub use keyword::{KeywordClassifier, KeywordRule, KeywordRules, DEFAULT_KEYWORD_RULES};
pub use limit::InFlightLimit;
pub use naive_bayes::NaiveBayesClassifier;
pub use prompt::{build_prompt, parse_class_response, Exemplar, Prompt, PromptError, PromptSpec};
pub use remote::{ChatClient, EncoderClassifier, EncoderRequest, EncoderResponse, PromptClassifier};
pub use stub::ScoreFnClassifier;

/// Shot counts used by the replication sweep.
pub const REPLICATION_SHOTS: [usize; 9] = [0, 1, 5, 10, 20, 30, 40, 50, 100];

/// Retries after an unparseable model response before giving up.
pub const PARSE_RETRIES: u32 = 2;

const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("backend timed out after {0:.1}s")]
    Timeout(f64),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unparseable model response after {attempts} attempts: {last:?}")]
    Unparseable { attempts: u32, last: String },
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl ClassifyError {
    /// Whether the endpoint itself is unreachable (as opposed to a bad answer).
    pub fn is_unavailable(&self) -> bool {
        matches!(
            self,
            ClassifyError::Timeout(_) | ClassifyError::Transport(_) | ClassifyError::Http { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Probabilistic,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label_id: String,
    pub scores: Vec<f64>,
    /// Wall-clock seconds around the full backend call.
    pub latency: f64,
    pub backend_id: String,
}

/// Index of the largest score; ties resolve to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

impl Prediction {
    /// Builds a prediction whose label is the argmax of `scores`.
    pub fn from_scores(
        taxonomy: &Taxonomy,
        scores: Vec<f64>,
        latency: f64,
        backend_id: &str,
    ) -> Result<Self, ClassifyError> {
        if scores.len() != taxonomy.len() {
            return Err(ClassifyError::InvalidScores(format!(
                "expected {} scores, got {}",
                taxonomy.len(),
                scores.len()
            )));
        }
        let i = argmax(&scores).expect("non-empty taxonomy");
        Ok(Self {
            label_id: taxonomy.leaves()[i].id.clone(),
            scores,
            latency,
            backend_id: backend_id.to_string(),
        })
    }

    pub fn one_hot(taxonomy: &Taxonomy, label_id: &str, latency: f64, backend_id: &str) -> Result<Self, ClassifyError> {
        let i = taxonomy
            .index_of(label_id)
            .ok_or_else(|| ClassifyError::InvalidScores(format!("unknown label {label_id:?}")))?;
        Ok(Self {
            label_id: label_id.to_string(),
            scores: one_hot(taxonomy.len(), i),
            latency,
            backend_id: backend_id.to_string(),
        })
    }

    /// Checks arity, value range, argmax agreement and normalization.
    pub fn validate(&self, taxonomy: &Taxonomy, kind: ScoreKind) -> Result<(), ClassifyError> {
        check_scores(&self.scores, taxonomy.len(), kind)?;
        let expected = &taxonomy.leaves()[argmax(&self.scores).expect("checked non-empty")].id;
        if *expected != self.label_id {
            return Err(ClassifyError::InvalidScores(format!(
                "label {:?} disagrees with argmax {expected:?}",
                self.label_id
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_scores(scores: &[f64], arity: usize, kind: ScoreKind) -> Result<(), ClassifyError> {
    if scores.len() != arity || arity == 0 {
        return Err(ClassifyError::InvalidScores(format!(
            "expected {arity} scores, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(ClassifyError::InvalidScores(format!("score {bad} is negative or not finite")));
    }
    match kind {
        ScoreKind::Probabilistic => {
            let sum: f64 = scores.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(ClassifyError::InvalidScores(format!("scores sum to {sum}, not 1")));
            }
        }
        ScoreKind::OneHot => {
            let ones = scores.iter().filter(|&&s| s == 1.0).count();
            let zeros = scores.iter().filter(|&&s| s == 0.0).count();
            if ones != 1 || zeros != arity - 1 {
                return Err(ClassifyError::InvalidScores("scores are not one-hot".into()));
            }
        }
    }
    Ok(())
}

/// A query classifier over a fixed taxonomy.
pub trait Classifier: Send + Sync {
    fn id(&self) -> &str;

    fn taxonomy(&self) -> &Taxonomy;

    fn score_kind(&self) -> ScoreKind;

    fn classify(&self, text: &str) -> Result<Prediction, ClassifyError>;

    /// Shot count for prompted backends.
    fn shots(&self) -> Option<usize> {
        None
    }
}

/// Runs `f` and returns its result with the elapsed wall-clock seconds.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

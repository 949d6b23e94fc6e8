//! Multinomial naive Bayes over word unigrams and bigrams.
//!
//! A small trainable baseline that produces real probability vectors, so
//! the experiment runner can exercise AUPRC without a remote encoder.

use std::collections::HashMap;

use super::{timed, ClassifyError, Classifier, Prediction, ScoreKind};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone)]
pub struct NaiveBayesClassifier {
    id: String,
    taxonomy: Taxonomy,
    log_prior: Vec<f64>,
    /// token -> per-class log likelihood
    log_likelihood: HashMap<String, Vec<f64>>,
    log_unseen: Vec<f64>,
}

fn tokens(text: &str) -> Vec<String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut out = words.clone();
    out.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

impl NaiveBayesClassifier {
    /// Fits on `(text, label)` pairs. Labels outside the taxonomy are an error.
    pub fn train<S: AsRef<str>, L: AsRef<str>>(
        id: &str,
        taxonomy: Taxonomy,
        examples: &[(S, L)],
        alpha: f64,
    ) -> Result<Self, ClassifyError> {
        let n = taxonomy.len();
        let mut class_docs = vec![0usize; n];
        let mut class_tokens = vec![0f64; n];
        let mut counts: HashMap<String, Vec<f64>> = HashMap::new();
        for (text, label) in examples {
            let c = taxonomy.index_of(label.as_ref()).ok_or_else(|| {
                ClassifyError::Config(format!("training label {:?} not in taxonomy", label.as_ref()))
            })?;
            class_docs[c] += 1;
            for tok in tokens(text.as_ref()) {
                counts.entry(tok).or_insert_with(|| vec![0.0; n])[c] += 1.0;
                class_tokens[c] += 1.0;
            }
        }
        if examples.is_empty() {
            return Err(ClassifyError::Config("no training examples".into()));
        }
        let vocab = counts.len() as f64;
        let total_docs = examples.len() as f64;
        let log_prior = class_docs
            .iter()
            .map(|&d| ((d as f64 + 1.0) / (total_docs + n as f64)).ln())
            .collect();
        let denom: Vec<f64> = class_tokens.iter().map(|t| t + alpha * (vocab + 1.0)).collect();
        let log_unseen = denom.iter().map(|d| (alpha / d).ln()).collect();
        let log_likelihood = counts
            .into_iter()
            .map(|(tok, c)| {
                let ll = c
                    .iter()
                    .zip(&denom)
                    .map(|(k, d)| ((k + alpha) / d).ln())
                    .collect();
                (tok, ll)
            })
            .collect();
        Ok(Self {
            id: id.to_string(),
            taxonomy,
            log_prior,
            log_likelihood,
            log_unseen,
        })
    }

    pub fn probabilities(&self, text: &str) -> Vec<f64> {
        let mut logp = self.log_prior.clone();
        for tok in tokens(text) {
            let ll = self.log_likelihood.get(&tok).unwrap_or(&self.log_unseen);
            for (l, x) in logp.iter_mut().zip(ll) {
                *l += x;
            }
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / sum).collect()
    }
}

impl Classifier for NaiveBayesClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    fn score_kind(&self) -> ScoreKind {
        ScoreKind::Probabilistic
    }

    fn classify(&self, text: &str) -> Result<Prediction, ClassifyError> {
        let (scores, latency) = timed(|| self.probabilities(text));
        Prediction::from_scores(&self.taxonomy, scores, latency, &self.id)
    }
}

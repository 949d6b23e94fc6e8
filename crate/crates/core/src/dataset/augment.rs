use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{DatasetError, LabeledQuery, Pool, Provenance};
use crate::classifier::{ChatClient, ClassifyError};
use crate::taxonomy::{ClassLabel, Taxonomy};

/// Source of synthetic queries: prompt in, one query out.
pub trait QueryGenerator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, ClassifyError>;
}

impl QueryGenerator for ChatClient {
    fn generate(&self, prompt: &str) -> Result<String, ClassifyError> {
        self.complete(prompt)
    }
}

impl<F> QueryGenerator for F
where
    F: Fn(&str) -> Result<String, ClassifyError> + Send + Sync,
{
    fn generate(&self, prompt: &str) -> Result<String, ClassifyError> {
        self(prompt)
    }
}

pub const SEED_EXEMPLARS: usize = 3;

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub seed: u64,
    /// Extra generation attempts per class beyond its deficit, spent on
    /// duplicate or empty outputs.
    pub duplicate_retry_cap: usize,
    pub concurrency: usize,
    pub checkpoint: Option<PathBuf>,
    pub locale: Option<String>,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            duplicate_retry_cap: 20,
            concurrency: 8,
            checkpoint: None,
            locale: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AugmentReport {
    /// Largest class count before augmentation.
    pub target: usize,
    pub generated: BTreeMap<String, usize>,
    pub duplicates_rejected: usize,
    /// Classes left below target once the retry cap ran out.
    pub shortfall: BTreeMap<String, usize>,
}

/// Prompt asking for one new query of `leaf`'s class.
pub fn generation_prompt(leaf: &ClassLabel, seeds: &[&str], locale: &str, default_locale: &str) -> String {
    let mut s = format!(
        "You write realistic user queries sent to a clinical chatbot.\n\nCategory: {} ({})\nDefinition: {}\n\nExisting queries in this category:\n",
        leaf.display_name,
        leaf.id,
        leaf.description_in(locale, default_locale)
    );
    for seed in seeds {
        s.push_str("- ");
        s.push_str(seed);
        s.push('\n');
    }
    s.push_str("\nWrite one new query that belongs to this category and differs from the examples. Output only the query text.");
    s
}

fn clean(output: &str) -> String {
    output
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '`')
        .trim()
        .to_string()
}

fn attempt_seed(seed: u64, class: usize, attempt: usize) -> u64 {
    seed ^ ((class as u64) << 40) ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generates synthetic items until every class of `taxonomy` reaches the
/// largest class count. Never exceeds that count.
///
/// Deterministic for a deterministic generator: each attempt draws its seed
/// exemplars from an rng keyed by (seed, class, attempt index) and results
/// are applied in attempt order.
pub fn augment_to_parity(
    pool: &mut Pool,
    taxonomy: &Taxonomy,
    generator: &dyn QueryGenerator,
    opts: &AugmentOptions,
) -> Result<AugmentReport, DatasetError> {
    let counts = pool.label_counts(taxonomy);
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(DatasetError::NoSeedExemplar(taxonomy.leaves()[i].id.clone()));
    }
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut report = AugmentReport {
        target,
        ..Default::default()
    };
    let locale = opts.locale.as_deref().unwrap_or(&taxonomy.default_locale);
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| DatasetError::InvalidPlan(e.to_string()))?;

    for (c, leaf) in taxonomy.leaves().iter().enumerate() {
        let deficit = target - counts[c];
        if deficit == 0 {
            continue;
        }
        let mut seeds: Vec<&LabeledQuery> = pool
            .iter()
            .filter(|i| i.is_usable() && i.label_id.as_deref() == Some(&leaf.id))
            .collect();
        if seeds.iter().any(|i| i.provenance != Provenance::Synthetic) {
            seeds.retain(|i| i.provenance != Provenance::Synthetic);
        }
        seeds.sort_by(|a, b| a.id.cmp(&b.id));
        let seed_texts: Vec<String> = seeds.iter().map(|i| i.text.clone()).collect();

        let budget = deficit + opts.duplicate_retry_cap;
        let mut produced = 0;
        let mut attempt = 0;
        while produced < deficit && attempt < budget {
            let n = (deficit - produced).min(budget - attempt);
            let prompts: Vec<String> = (attempt..attempt + n)
                .map(|a| {
                    let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed(opts.seed, c, a));
                    let picked: Vec<&str> = seed_texts
                        .choose_multiple(&mut rng, SEED_EXEMPLARS)
                        .map(String::as_str)
                        .collect();
                    generation_prompt(leaf, &picked, locale, &taxonomy.default_locale)
                })
                .collect();
            attempt += n;
            let outputs: Vec<Result<String, ClassifyError>> =
                threads.install(|| prompts.par_iter().map(|p| generator.generate(p)).collect());
            let mut failure = None;
            for out in outputs {
                let text = match out {
                    Ok(t) => clean(&t),
                    Err(e) => {
                        failure.get_or_insert(e);
                        continue;
                    }
                };
                if produced == deficit || text.is_empty() || pool.contains_text(&text) {
                    report.duplicates_rejected += 1;
                    continue;
                }
                let mut item = LabeledQuery::new(&text, "synthetic", Provenance::Synthetic).with_label(&leaf.id);
                item.locale = Some(locale.to_string());
                pool.insert(item);
                produced += 1;
                *report.generated.entry(leaf.id.clone()).or_insert(0) += 1;
            }
            if let Some(path) = &opts.checkpoint {
                pool.write(path)?;
            }
            if let Some(source) = failure {
                return Err(DatasetError::EndpointUnavailable {
                    labeled: report.generated.values().sum(),
                    source,
                });
            }
        }
        if produced < deficit {
            report.shortfall.insert(leaf.id.clone(), deficit - produced);
        }
    }
    Ok(report)
}

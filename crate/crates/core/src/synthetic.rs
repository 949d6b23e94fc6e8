//! Deterministic synthetic pools for tests, benchmarks and offline demos.
//!
//! Each query mixes words from its class's description and examples with
//! shared filler, so simple bag-of-words models can learn the classes but
//! not perfectly.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabeledQuery, Pool, Provenance};
use crate::taxonomy::Taxonomy;

const FILLER: &[&str] = &[
    "please", "can", "you", "tell", "me", "about", "the", "my", "i", "want", "to", "know", "is", "it", "what",
    "how", "today", "now", "this", "that", "really", "maybe", "just", "some", "one", "thing", "again", "help",
];

fn class_vocab(taxonomy: &Taxonomy, index: usize) -> Vec<String> {
    let leaf = &taxonomy.leaves()[index];
    let loc = &taxonomy.default_locale;
    let mut words: Vec<String> = std::iter::once(leaf.description_in(loc, loc))
        .chain(leaf.examples_in(loc, loc).iter().map(String::as_str))
        .chain(std::iter::once(leaf.id.as_str()))
        .flat_map(|s| s.split(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.len() > 3)
        .map(str::to_lowercase)
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Generates `counts[i]` labeled queries for leaf `i`. Provenance is
/// `llm_labeled`; texts are unique.
pub fn synthetic_pool(taxonomy: &Taxonomy, counts: &[usize], seed: u64) -> Pool {
    assert_eq!(counts.len(), taxonomy.len(), "one count per leaf");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Pool::new();
    for (c, &n) in counts.iter().enumerate() {
        let vocab = class_vocab(taxonomy, c);
        let label = &taxonomy.leaves()[c].id;
        for i in 0..n {
            let len = rng.random_range(5..10);
            let mut words: Vec<&str> = Vec::with_capacity(len + 1);
            for _ in 0..len {
                let w = if rng.random_bool(0.6) && !vocab.is_empty() {
                    vocab.choose(&mut rng).expect("non-empty").as_str()
                } else {
                    FILLER.choose(&mut rng).expect("non-empty")
                };
                words.push(w);
            }
            let text = format!("{} q{c}x{i}", words.join(" "));
            pool.insert(LabeledQuery::new(&text, "synthetic-fixture", Provenance::LlmLabeled).with_label(label));
        }
    }
    pool
}

/// Skewed per-class counts summing to roughly `total`: class `i` gets a
/// weight decaying geometrically with a seeded shuffle of the classes.
pub fn skewed_counts(classes: usize, total: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..classes).map(|_| rng.random_range(0.2..1.0f64).powi(2)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| ((w / sum) * total as f64).round().max(1.0) as usize).collect()
}

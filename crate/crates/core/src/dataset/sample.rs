use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledQuery, Pool};
use crate::taxonomy::{LabelMapping, Taxonomy};
use crate::text::sha256_hex;

pub const TOXIC_TARGET: &str = "crime_or_toxic";

fn default_toxic_labels() -> Vec<String> {
    LabelMapping::separate_to_total(&Taxonomy::canonical())
        .expect("embedded mapping is valid")
        .entries()
        .iter()
        .filter(|(s, t)| t.as_str() == TOXIC_TARGET && s.as_str() != TOXIC_TARGET)
        .map(|(s, _)| s.clone())
        .collect()
}

fn default_toxic_target() -> String {
    TOXIC_TARGET.into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanKind {
    /// `per_class` items from every class.
    Balanced { per_class: usize },
    /// `total` items following the pool's label distribution.
    Imbalanced { total: usize },
    /// Twice the imbalanced plan's size, same rule.
    ImbalancedLarge { base_total: usize },
    /// `per_class` items from each listed class only.
    PerClassFixed { per_class: usize, labels: Vec<String> },
    /// `per_class` items per non-toxic class plus `per_class` toxic items
    /// drawn across all toxic subtypes and labeled `toxic_target`.
    ToxicTotal {
        per_class: usize,
        #[serde(default = "default_toxic_labels")]
        toxic_labels: Vec<String>,
        #[serde(default = "default_toxic_target")]
        toxic_target: String,
    },
    /// `per_class` items from every class, each toxic subtype its own class.
    ToxicSeparate {
        per_class: usize,
        #[serde(default = "default_toxic_labels")]
        toxic_labels: Vec<String>,
    },
}

/// Held-out portion drawn next to the training sample, per stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Holdout {
    None,
    /// Fractions of the full split; validation and test counts are derived
    /// from the train count of each stratum.
    Ratio { train: f64, validation: f64, test: f64 },
    PerClass { validation: usize, test: usize },
}

impl Default for Holdout {
    fn default() -> Self {
        Holdout::Ratio {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl Holdout {
    fn counts(&self, train: usize) -> (usize, usize) {
        match *self {
            Holdout::None => (0, 0),
            Holdout::Ratio { train: tr, validation, test } => {
                let scale = train as f64 / tr;
                ((scale * validation).round() as usize, (scale * test).round() as usize)
            }
            Holdout::PerClass { validation, test } => (validation, test),
        }
    }

    fn check(&self) -> Result<(), DatasetError> {
        if let Holdout::Ratio { train, validation, test } = *self {
            let ok = train > 0.0
                && validation >= 0.0
                && test >= 0.0
                && ((train + validation + test) - 1.0).abs() < 1e-9;
            if !ok {
                return Err(DatasetError::InvalidPlan(format!(
                    "holdout ratios {train}/{validation}/{test} must be non-negative, train positive, summing to 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub holdout: Holdout,
    #[serde(flatten)]
    pub kind: PlanKind,
}

impl SamplingPlan {
    pub fn new(name: &str, kind: PlanKind, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            holdout: Holdout::default(),
            kind,
        }
    }

    pub fn with_holdout(mut self, holdout: Holdout) -> Self {
        self.holdout = holdout;
        self
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("plan serializes").as_bytes())
    }

    pub fn parse_toml(text: &str) -> Result<Self, DatasetError> {
        toml::from_str(text).map_err(|e| DatasetError::InvalidPlan(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplitEntry {
    pub id: String,
    /// Label in the split's frame; differs from the pool label when
    /// toxic subtypes are collapsed.
    pub label_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub plan: SamplingPlan,
    pub plan_digest: String,
    pub pool_digest: String,
    /// Output labels in stratum order.
    pub labels: Vec<String>,
    pub train: Vec<SplitEntry>,
    pub validation: Vec<SplitEntry>,
    pub test: Vec<SplitEntry>,
}

impl DatasetSplit {
    pub fn all_ids(&self) -> HashSet<&str> {
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn held_out_ids(&self) -> HashSet<String> {
        self.validation.iter().chain(&self.test).map(|e| e.id.clone()).collect()
    }
}

struct Stratum {
    output: String,
    sources: Vec<String>,
    train: usize,
}

/// Integer apportionment of `total` proportional to `weights`. Floors first,
/// then hands out the remainder by largest fractional part, ties to the
/// lowest index.
pub fn largest_remainder(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut rema = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = total as u128 * w as u128;
        out.push((num / sum) as usize);
        rema.push((num % sum, i));
    }
    let left = total - out.iter().sum::<usize>();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rema.iter().take(left) {
        out[i] += 1;
    }
    out
}

fn check_labels(taxonomy: &Taxonomy, labels: &[String]) -> Result<(), DatasetError> {
    match labels.iter().find(|l| !taxonomy.contains(l)) {
        Some(l) => Err(DatasetError::UnknownLabel(l.clone())),
        None => Ok(()),
    }
}

fn strata(
    taxonomy: &Taxonomy,
    plan: &PlanKind,
    available: &dyn Fn(&str) -> usize,
) -> Result<Vec<Stratum>, DatasetError> {
    let single = |id: &str, n: usize| Stratum {
        output: id.to_string(),
        sources: vec![id.to_string()],
        train: n,
    };
    let proportional = |total: usize| -> Result<Vec<Stratum>, DatasetError> {
        let weights: Vec<usize> = taxonomy.ids().map(available).collect();
        let pool_total: usize = weights.iter().sum();
        if total > pool_total {
            return Err(DatasetError::Insufficient {
                stratum: "*".into(),
                needed: total,
                available: pool_total,
            });
        }
        let counts = largest_remainder(&weights, total);
        Ok(taxonomy.ids().zip(counts).map(|(id, n)| single(id, n)).collect())
    };
    Ok(match plan {
        PlanKind::Balanced { per_class } => taxonomy.ids().map(|id| single(id, *per_class)).collect(),
        PlanKind::Imbalanced { total } => proportional(*total)?,
        PlanKind::ImbalancedLarge { base_total } => proportional(2 * base_total)?,
        PlanKind::PerClassFixed { per_class, labels } => {
            if labels.is_empty() {
                return Err(DatasetError::InvalidPlan("per_class_fixed needs at least one label".into()));
            }
            check_labels(taxonomy, labels)?;
            // canonical order regardless of listing order
            taxonomy
                .ids()
                .filter(|id| labels.iter().any(|l| l == id))
                .map(|id| single(id, *per_class))
                .collect()
        }
        PlanKind::ToxicTotal {
            per_class,
            toxic_labels,
            toxic_target,
        } => {
            check_labels(taxonomy, toxic_labels)?;
            let mut out = Vec::new();
            let mut toxic_placed = false;
            for id in taxonomy.ids() {
                if toxic_labels.iter().any(|t| t == id) {
                    if !toxic_placed {
                        out.push(Stratum {
                            output: toxic_target.clone(),
                            sources: toxic_labels.clone(),
                            train: *per_class,
                        });
                        toxic_placed = true;
                    }
                } else {
                    out.push(single(id, *per_class));
                }
            }
            out
        }
        PlanKind::ToxicSeparate { per_class, toxic_labels } => {
            check_labels(taxonomy, toxic_labels)?;
            taxonomy.ids().map(|id| single(id, *per_class)).collect()
        }
    })
}

/// Draws a split according to `plan`. Pure in (pool, taxonomy, plan).
pub fn sample(pool: &Pool, taxonomy: &Taxonomy, plan: &SamplingPlan) -> Result<DatasetSplit, DatasetError> {
    sample_excluding(pool, taxonomy, plan, &HashSet::new())
}

/// Like [`sample`], never drawing any id in `exclude`. Used to keep a test
/// set shared across plans out of every training sample.
pub fn sample_excluding(
    pool: &Pool,
    taxonomy: &Taxonomy,
    plan: &SamplingPlan,
    exclude: &HashSet<String>,
) -> Result<DatasetSplit, DatasetError> {
    plan.holdout.check()?;
    let eligible: Vec<&LabeledQuery> = {
        let mut v: Vec<&LabeledQuery> = pool
            .iter()
            .filter(|i| i.is_usable() && !exclude.contains(&i.id))
            .collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    };
    let by_label = |label: &str| -> Vec<&LabeledQuery> {
        eligible
            .iter()
            .copied()
            .filter(|i| i.label_id.as_deref() == Some(label))
            .collect()
    };
    let available = |label: &str| by_label(label).len();
    let strata = strata(taxonomy, &plan.kind, &available)?;

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for s in &strata {
        let (v, t) = plan.holdout.counts(s.train);
        let needed = s.train + v + t;
        let mut candidates: Vec<&LabeledQuery> = s.sources.iter().flat_map(|l| by_label(l)).collect();
        candidates.sort_by(|a, b| a.id.cmp(&b.id));
        if candidates.len() < needed {
            return Err(DatasetError::Insufficient {
                stratum: s.output.clone(),
                needed,
                available: candidates.len(),
            });
        }
        candidates.shuffle(&mut rng);
        let entry = |i: &&LabeledQuery| SplitEntry {
            id: i.id.clone(),
            label_id: s.output.clone(),
        };
        train.extend(candidates[..s.train].iter().map(entry));
        validation.extend(candidates[s.train..s.train + v].iter().map(entry));
        test.extend(candidates[s.train + v..needed].iter().map(entry));
    }
    train.sort();
    validation.sort();
    test.sort();
    Ok(DatasetSplit {
        plan: plan.clone(),
        plan_digest: plan.digest(),
        pool_digest: pool.digest(),
        labels: strata.into_iter().map(|s| s.output).collect(),
        train,
        validation,
        test,
    })
}

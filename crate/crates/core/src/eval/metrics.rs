use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use super::EvalError;
use crate::classifier::Prediction;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label_id: String,
    /// Gold count.
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the class has no gold items.
    pub auprc: Option<f64>,
}

/// Metrics over one set of items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub n_items: usize,
    pub accuracy: f64,
    /// Mean F1 over classes present in gold.
    pub macro_f1: f64,
    /// F1 weighted by gold support.
    pub weighted_f1: f64,
    /// Mean F1 over classes present in gold or predictions.
    pub union_macro_f1: f64,
    /// Mean AUPRC over classes present in gold; absent with fewer than two
    /// such classes, where one-vs-rest curves do not discriminate.
    pub macro_auprc: Option<f64>,
    pub gold_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBlock {
    pub name: String,
    pub labels: Vec<String>,
    #[serde(flatten)]
    pub metrics: MetricBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub taxonomy_version: String,
    pub labels: Vec<String>,
    pub n_items: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_auprc: Option<f64>,
    pub weighted_f1: f64,
    pub union_macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupBlock>,
}

impl EvalReport {
    /// The whole-set block.
    pub fn total(&self) -> MetricBlock {
        MetricBlock {
            n_items: self.n_items,
            accuracy: self.accuracy,
            macro_f1: self.macro_f1,
            weighted_f1: self.weighted_f1,
            union_macro_f1: self.union_macro_f1,
            macro_auprc: self.macro_auprc,
            gold_classes: self.per_class.iter().filter(|c| c.support > 0).count(),
        }
    }

    pub fn group(&self, name: &str) -> Option<&GroupBlock> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// Average precision of `scores` against binary `positive`: the sum over
/// distinct thresholds (descending) of precision times recall gained.
/// Tied scores enter together. `None` without positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

struct Checked {
    gold: Vec<usize>,
    pred: Vec<usize>,
}

fn check<S: AsRef<str>>(gold: &[S], predictions: &[Prediction], taxonomy: &Taxonomy) -> Result<Checked, EvalError> {
    if gold.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predictions: predictions.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let idx = |i: usize, label: &str| {
        taxonomy.index_of(label).ok_or_else(|| EvalError::UnknownLabel {
            index: i,
            label: label.to_string(),
        })
    };
    let mut out = Checked {
        gold: Vec::with_capacity(gold.len()),
        pred: Vec::with_capacity(gold.len()),
    };
    for (i, (g, p)) in gold.iter().zip(predictions).enumerate() {
        if p.scores.len() != taxonomy.len() {
            return Err(EvalError::Arity {
                index: i,
                expected: taxonomy.len(),
                got: p.scores.len(),
            });
        }
        out.gold.push(idx(i, g.as_ref())?);
        out.pred.push(idx(i, &p.label_id)?);
    }
    Ok(out)
}

/// Per-class metrics and block over the items at `rows`.
fn block(
    c: &Checked,
    predictions: &[Prediction],
    rows: &[usize],
    taxonomy: &Taxonomy,
) -> (MetricBlock, Vec<ClassMetrics>) {
    let n = taxonomy.len();
    let mut support = vec![0usize; n];
    let mut predicted = vec![0usize; n];
    let mut tp = vec![0usize; n];
    for &r in rows {
        support[c.gold[r]] += 1;
        predicted[c.pred[r]] += 1;
        if c.gold[r] == c.pred[r] {
            tp[c.gold[r]] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|k| {
            let precision = if predicted[k] == 0 { 0.0 } else { tp[k] as f64 / predicted[k] as f64 };
            let recall = if support[k] == 0 { 0.0 } else { tp[k] as f64 / support[k] as f64 };
            let auprc = if support[k] == 0 {
                None
            } else {
                let scores: Vec<f64> = rows.iter().map(|&r| predictions[r].scores[k]).collect();
                let positive: Vec<bool> = rows.iter().map(|&r| c.gold[r] == k).collect();
                average_precision(&scores, &positive)
            };
            ClassMetrics {
                label_id: taxonomy.leaves()[k].id.clone(),
                support: support[k],
                predicted: predicted[k],
                precision,
                recall,
                f1: f1(precision, recall),
                auprc,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let total = rows.len();
    let correct: usize = tp.iter().sum();
    let macro_auprc = if present.len() >= 2 {
        Some(mean(present.iter().map(|m| m.auprc.expect("present classes have auprc"))))
    } else {
        None
    };
    let b = MetricBlock {
        n_items: total,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        macro_f1: mean(present.iter().map(|m| m.f1)),
        weighted_f1: if total == 0 {
            0.0
        } else {
            present.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64
        },
        union_macro_f1: mean(per_class.iter().filter(|m| m.support > 0 || m.predicted > 0).map(|m| m.f1)),
        macro_auprc,
        gold_classes: present.len(),
    };
    (b, per_class)
}

/// Scores `predictions` against `gold` in the taxonomy's canonical frame.
pub fn evaluate<S: AsRef<str>>(
    gold: &[S],
    predictions: &[Prediction],
    taxonomy: &Taxonomy,
) -> Result<EvalReport, EvalError> {
    let c = check(gold, predictions, taxonomy)?;
    let rows: Vec<usize> = (0..gold.len()).collect();
    let (b, per_class) = block(&c, predictions, &rows, taxonomy);
    let confusion = ConfusionMatrix::from_indices(taxonomy, &c.gold, &c.pred);
    Ok(EvalReport {
        taxonomy_version: taxonomy.version.clone(),
        labels: taxonomy.ids().map(String::from).collect(),
        n_items: b.n_items,
        accuracy: b.accuracy,
        macro_f1: b.macro_f1,
        macro_auprc: b.macro_auprc,
        weighted_f1: b.weighted_f1,
        union_macro_f1: b.union_macro_f1,
        per_class,
        confusion,
        groups: Vec::new(),
    })
}

/// Metric blocks restricted to items whose gold label is in each group.
pub fn group_metrics<S: AsRef<str>>(
    gold: &[S],
    predictions: &[Prediction],
    taxonomy: &Taxonomy,
    groups: &[GroupSpec],
) -> Result<Vec<GroupBlock>, EvalError> {
    let c = check(gold, predictions, taxonomy)?;
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mut members = BTreeSet::new();
        for l in &g.labels {
            members.insert(taxonomy.index_of(l).ok_or_else(|| EvalError::UnknownGroupLabel {
                group: g.name.clone(),
                label: l.clone(),
            })?);
        }
        let rows: Vec<usize> = (0..gold.len()).filter(|&r| members.contains(&c.gold[r])).collect();
        let (metrics, _) = block(&c, predictions, &rows, taxonomy);
        out.push(GroupBlock {
            name: g.name.clone(),
            labels: g.labels.clone(),
            metrics,
        });
    }
    Ok(out)
}

/// [`evaluate`] plus group blocks attached to the report.
pub fn evaluate_with_groups<S: AsRef<str>>(
    gold: &[S],
    predictions: &[Prediction],
    taxonomy: &Taxonomy,
    groups: &[GroupSpec],
) -> Result<EvalReport, EvalError> {
    let mut report = evaluate(gold, predictions, taxonomy)?;
    report.groups = group_metrics(gold, predictions, taxonomy, groups)?;
    Ok(report)
}

/// Toxic / Non-Toxic split used by the granularity comparison.
pub fn toxic_groups(taxonomy: &Taxonomy, toxic_label: &str) -> Vec<GroupSpec> {
    vec![
        GroupSpec {
            name: "toxic".into(),
            labels: vec![toxic_label.to_string()],
        },
        GroupSpec {
            name: "non_toxic".into(),
            labels: taxonomy.ids().filter(|&l| l != toxic_label).map(String::from).collect(),
        },
    ]
}

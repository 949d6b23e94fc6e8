use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::taxonomy::Taxonomy;

/// Counts indexed by (gold, predicted), canonical order on both axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

/// Plot-ready form: raw counts plus row-normalized rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub row_normalized: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub(crate) fn from_indices(taxonomy: &Taxonomy, gold: &[usize], pred: &[usize]) -> Self {
        let n = taxonomy.len();
        let mut counts = vec![vec![0u64; n]; n];
        for (&g, &p) in gold.iter().zip(pred) {
            counts[g][p] += 1;
        }
        Self {
            labels: taxonomy.ids().map(String::from).collect(),
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.labels.len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn get(&self, gold: &str, predicted: &str) -> Option<u64> {
        let g = self.labels.iter().position(|l| l == gold)?;
        let p = self.labels.iter().position(|l| l == predicted)?;
        Some(self.counts[g][p])
    }

    /// Rectangular grid: header row of predicted labels, one row per gold label.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gold\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 input")
    }

    pub fn plot_data(&self, title: &str) -> ConfusionPlotData {
        let row_normalized = self
            .counts
            .iter()
            .map(|r| {
                let s: u64 = r.iter().sum();
                r.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
            })
            .collect();
        ConfusionPlotData {
            title: title.to_string(),
            x_label: "predicted".into(),
            y_label: "gold".into(),
            labels: self.labels.clone(),
            counts: self.counts.clone(),
            row_normalized,
        }
    }

    pub fn write_files(&self, csv_path: &Path, plot_path: &Path, title: &str) -> Result<(), EvalError> {
        std::fs::write(csv_path, self.to_csv()).map_err(EvalError::io(csv_path))?;
        let json = serde_json::to_string_pretty(&self.plot_data(title)).expect("plot data serializes");
        std::fs::write(plot_path, json + "\n").map_err(EvalError::io(plot_path))
    }
}

/// Confusion counts from label sequences.
pub fn confusion<G: AsRef<str>, P: AsRef<str>>(
    gold: &[G],
    predicted: &[P],
    taxonomy: &Taxonomy,
) -> Result<ConfusionMatrix, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predictions: predicted.len(),
        });
    }
    let idx = |i: usize, l: &str| {
        taxonomy.index_of(l).ok_or_else(|| EvalError::UnknownLabel {
            index: i,
            label: l.to_string(),
        })
    };
    let g: Vec<usize> = gold.iter().enumerate().map(|(i, l)| idx(i, l.as_ref())).collect::<Result<_, _>>()?;
    let p: Vec<usize> = predicted
        .iter()
        .enumerate()
        .map(|(i, l)| idx(i, l.as_ref()))
        .collect::<Result<_, _>>()?;
    Ok(ConfusionMatrix::from_indices(taxonomy, &g, &p))
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::ActivityLabel;

/// Row-normalized confusion matrix; rows are the true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ActivityLabel>,
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
    /// Rows with no true instance; their normalized row is all zeros.
    pub zero_support: Vec<bool>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<ActivityLabel>, counts: Vec<Vec<u64>>) -> Self {
        let normalized: Vec<Vec<f64>> = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
            })
            .collect();
        let zero_support = counts.iter().map(|r| r.iter().sum::<u64>() == 0).collect();
        Self { classes, counts, normalized, zero_support }
    }

    /// Diagonal of the normalized matrix.
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        (0..self.classes.len()).map(|i| self.normalized[i][i]).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.counts.iter().flatten().sum();
        let right: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        if total == 0 {
            0.0
        } else {
            right as f64 / total as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth");
        for c in &self.classes {
            out.push(',');
            out.push_str(c.as_str());
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.normalized) {
            out.push_str(c.as_str());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    truth: &[ActivityLabel],
    predicted: &[ActivityLabel],
    classes: &[ActivityLabel],
) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::param(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let index = |l: &ActivityLabel| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::param(format!("label {l} not among the evaluated classes")))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(predicted) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix::from_counts(classes.to_vec(), counts))
}

/// Non-interpolated average precision of one ranking.
///
/// Items with equal score form one rank block: every positive in a block gets
/// the precision measured at the end of the block. Returns `None` without
/// positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut seen, mut hits, mut sum) = (0usize, 0usize, 0.0);
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end < order.len() && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        let block_hits = order[k..end].iter().filter(|&&i| positive[i]).count();
        seen += end - k;
        hits += block_hits;
        sum += block_hits as f64 * hits as f64 / seen as f64;
        k = end;
    }
    Some(sum / n_pos as f64)
}

/// Mean of per-class average precision over classes present in `truth`.
///
/// `scores[i][c]` is window `i`'s score for `classes[c]`.
pub fn mean_average_precision(
    scores: &[Vec<f64>],
    truth: &[ActivityLabel],
    classes: &[ActivityLabel],
) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::param("score rows and labels differ in count"));
    }
    if let Some(row) = scores.iter().find(|r| r.len() != classes.len()) {
        return Err(Error::DimensionMismatch { expected: classes.len(), actual: row.len() });
    }
    let mut aps = Vec::new();
    for (c, class) in classes.iter().enumerate() {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = truth.iter().map(|t| t == class).collect();
        match average_precision(&col, &pos) {
            Some(ap) => aps.push(ap),
            None => log::warn!("class {class} absent from truth; excluded from mAP"),
        }
    }
    if aps.is_empty() {
        return Err(Error::InsufficientData("no class present for mAP".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

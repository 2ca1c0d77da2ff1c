//! Held-out classification metrics for the binary task.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// Area under the ROC curve as the normalized Mann-Whitney statistic, with
/// tied scores given their average rank.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            context: "auc labels",
            expected: scores.len(),
            found: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(usize::from(n_pos > 0)));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let rank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += rank * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Metrics with class 1 as the positive class. `scores` are the predicted
/// probabilities of class 1; `predicted` the hard labels.
pub fn classification_metrics(
    scores: &[f64],
    predicted: &[usize],
    labels: &[usize],
) -> Result<ClassificationMetrics> {
    if predicted.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "predicted labels",
            expected: labels.len(),
            found: predicted.len(),
        });
    }
    let positive: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
    let auc = roc_auc(scores, &positive)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    let mut correct = 0usize;
    for (&p, &y) in predicted.iter().zip(labels) {
        correct += usize::from(p == y);
        match (p == 1, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        auc,
        f1,
        precision,
        recall,
        accuracy: ratio(correct, labels.len()),
    })
}

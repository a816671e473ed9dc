//! Classification metrics.

use crate::error::{ensure_finite, QkaError, Result};

/// Area under the ROC curve via the rank-sum statistic, with tied scores
/// sharing their mid-rank. Labels are `±1`; positives are `+1`.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(QkaError::DimensionMismatch {
            context: "scores vs labels",
            expected: labels.len(),
            found: scores.len(),
        });
    }
    ensure_finite(scores, "scores")?;
    let n_pos = labels.iter().filter(|y| **y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(QkaError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based; a tie block shares the average
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    let pos_rank_sum: f64 = (0..labels.len()).filter(|&i| labels[i] > 0.0).map(|i| ranks[i]).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// F1 for the `+1` class; 0 when there are no true positives.
pub fn f1_score(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(QkaError::DimensionMismatch {
            context: "predictions vs labels",
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (p, y) in predictions.iter().zip(labels) {
        match (*p > 0.0, *y > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fne) as f64)
}

pub fn accuracy(predictions: &[f64], labels: &[f64]) -> f64 {
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p > 0.0) == (**y > 0.0))
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Rescales to `[0, 1]`; a constant series maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

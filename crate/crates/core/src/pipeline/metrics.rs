//! Support-weighted classification metrics.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {labels} labels, {predictions} predictions, {scores} score rows")]
    LengthMismatch { labels: usize, predictions: usize, scores: usize },
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("class id {class} outside 0..{classes}")]
    ClassOutOfRange { class: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// One-vs-rest AUC; absent when the class has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[t][p]` counts samples of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 plus supports. Zero denominators give 0.
fn class_prf(y_true: &[usize], y_pred: &[usize], classes: usize) -> Vec<(usize, f64, f64, f64)> {
    (0..classes)
        .map(|q| {
            let tp = y_true.iter().zip(y_pred).filter(|&(&t, &p)| t == q && p == q).count();
            let predicted = y_pred.iter().filter(|&&p| p == q).count();
            let support = y_true.iter().filter(|&&t| t == q).count();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            (support, precision, recall, f1)
        })
        .collect()
}

/// Support-weighted F1. Mismatched lengths score 0.
pub fn weighted_f1(y_true: &[usize], y_pred: &[usize], classes: usize) -> f64 {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return 0.0;
    }
    let n = y_true.len() as f64;
    class_prf(y_true, y_pred, classes).iter().map(|&(s, _, _, f1)| s as f64 * f1).sum::<f64>() / n
}

/// Area under the ROC curve of `scores` for binary `positive` labels, via the
/// Mann-Whitney rank statistic with ties counted as one half.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positive[k] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Accuracy, weighted precision/recall/F1 and weighted one-vs-rest AUC.
///
/// `scores[n][q]` is the predicted probability of class `q` for sample `n`.
pub fn compute_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    scores: &[Vec<f64>],
    classes: usize,
) -> Result<MetricsReport, MetricsError> {
    if y_true.len() != y_pred.len() || y_true.len() != scores.len() || y_true.is_empty() {
        return Err(MetricsError::LengthMismatch {
            labels: y_true.len(),
            predictions: y_pred.len(),
            scores: scores.len(),
        });
    }
    if let Some(&class) = y_true.iter().chain(y_pred).find(|&&c| c >= classes) {
        return Err(MetricsError::ClassOutOfRange { class, classes });
    }
    if let Some(row) = scores.iter().find(|r| r.len() != classes) {
        return Err(MetricsError::LengthMismatch { labels: classes, predictions: classes, scores: row.len() });
    }
    let present = (0..classes).filter(|q| y_true.contains(q)).count();
    if present < 2 {
        return Err(MetricsError::SingleClass);
    }
    for q in (0..classes).filter(|q| !y_true.contains(q)) {
        log::warn!("class {q} has no samples; it carries zero weight in the averages");
    }
    let n = y_true.len();
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let prf = class_prf(y_true, y_pred, classes);
    let mut per_class = Vec::with_capacity(classes);
    let (mut p, mut r, mut f, mut auc, mut auc_w) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (q, &(support, precision, recall, f1)) in prf.iter().enumerate() {
        let s: Vec<f64> = scores.iter().map(|row| row[q]).collect();
        let pos: Vec<bool> = y_true.iter().map(|&t| t == q).collect();
        let a = binary_auc(&s, &pos);
        let w = support as f64;
        p += w * precision;
        r += w * recall;
        f += w * f1;
        if let Some(a) = a {
            auc += w * a;
            auc_w += w;
        }
        per_class.push(ClassMetrics { class: q, support, precision, recall, f1, auc: a });
    }
    let nf = n as f64;
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(MetricsReport {
        samples: n,
        accuracy: ratio(correct, n),
        precision: p / nf,
        recall: r / nf,
        f1: f / nf,
        auc: auc / auc_w,
        per_class,
        confusion,
    })
}

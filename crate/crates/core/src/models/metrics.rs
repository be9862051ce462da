use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// False when the denominator was zero and the value was reported as 0.
    pub precision_defined: bool,
    pub recall_defined: bool,
    /// False when only one class is present; the value is then 0.5.
    pub roc_auc_defined: bool,
}

impl MetricsReport {
    /// Threshold-based metrics from confusion counts; `roc_auc` is left at
    /// 0.5 and flagged undefined.
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { (0.0, false) } else { (num as f64 / den as f64, true) };
        let (precision, precision_defined) = ratio(tp, tp + fp);
        let (recall, recall_defined) = ratio(tp, tp + fn_);
        let n = tp + fp + tn + fn_;
        Self {
            accuracy: if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 },
            precision,
            recall,
            f1: f1_score(precision, recall),
            roc_auc: 0.5,
            tp,
            fp,
            tn,
            fn_,
            precision_defined,
            recall_defined,
            roc_auc_defined: false,
        }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Area under the ROC curve by the trapezoidal rule over every distinct
/// score threshold; tied scores form one diagonal step.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    let pos = y_true.iter().filter(|&&v| v == 1).count() as f64;
    let neg = y_true.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if y_true[order[k]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        area += (fp - fp0) * (tp + tp0) / 2.0;
    }
    Some(area / (pos * neg))
}

pub fn compute_metrics(y_true: &[u8], y_pred: &[u8], scores: &[f64]) -> Result<MetricsReport, ModelError> {
    if y_true.len() != y_pred.len() {
        return Err(ModelError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() != scores.len() {
        return Err(ModelError::LengthMismatch(y_true.len(), scores.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let mut report = MetricsReport::from_counts(tp, fp, tn, fn_);
    if let Some(auc) = roc_auc(y_true, scores) {
        report.roc_auc = auc;
        report.roc_auc_defined = true;
    }
    Ok(report)
}

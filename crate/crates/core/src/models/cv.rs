use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, derive_seed, Dataset, MetricsReport, ModelError, Trainer};
use crate::par;

/// Fold index of every row. Rows of each class are shuffled and dealt
/// round-robin, the dealer position carrying over from class 0 to class 1,
/// so fold sizes differ by at most one and so do per-fold class counts.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Result<Vec<usize>, ModelError> {
    if k < 2 || y.len() < k {
        return Err(ModelError::TooFewRows { rows: y.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    let mut dealer = 0;
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        for i in rows {
            fold[i] = dealer % k;
            dealer += 1;
        }
    }
    Ok(fold)
}

/// Split rows by fold: `(train, test)` index lists, both ascending.
pub fn fold_split(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != f)
}

/// Held-out metrics of every fold, in fold order.
pub fn kfold_cv(ds: &Dataset, k: usize, trainer: &dyn Trainer, seed: u64) -> Result<Vec<MetricsReport>, ModelError> {
    let folds = stratified_folds(&ds.y, k, seed)?;
    par::map(k, |f| {
        let (train, test) = fold_split(&folds, f);
        let model = trainer.fit(&ds.subset(&train), derive_seed(seed, f as u64))?;
        let scores: Vec<f64> = test.iter().map(|&i| model.predict_proba(ds.x.row(i))).collect();
        let pred: Vec<u8> = test.iter().map(|&i| model.predict(ds.x.row(i))).collect();
        let truth: Vec<u8> = test.iter().map(|&i| ds.y[i]).collect();
        compute_metrics(&truth, &pred, &scores)
    })
    .into_iter()
    .collect()
}

/// Unweighted means over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
}

pub fn summarize(reports: &[MetricsReport]) -> MetricsSummary {
    let n = reports.len().max(1) as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricsSummary {
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        roc_auc: mean(|r| r.roc_auc),
    }
}

//! Comparison classifiers. None of them handle missing values, so each one
//! mean-imputes with statistics of its own training fold.

use serde::{Deserialize, Serialize};

use super::{Classifier, Dataset, ModelError, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LogisticRegression,
    DecisionTree,
    NaiveBayes,
    Knn,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::LogisticRegression,
        BaselineKind::DecisionTree,
        BaselineKind::NaiveBayes,
        BaselineKind::Knn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::LogisticRegression => "logistic_regression",
            BaselineKind::DecisionTree => "decision_tree",
            BaselineKind::NaiveBayes => "naive_bayes",
            BaselineKind::Knn => "knn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    pub lr_lambda: f64,
    pub lr_max_iter: usize,
    pub lr_tol: f64,
    pub dt_max_depth: usize,
    pub knn_k: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { lr_lambda: 1e-2, lr_max_iter: 5000, lr_tol: 1e-6, dt_max_depth: 8, knn_k: 5 }
    }
}

/// Column means of the present values (0 for an all-missing column) and
/// standard deviations of the imputed columns (1 when constant).
#[derive(Debug, Clone)]
struct Scaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    fn fit(ds: &Dataset) -> Self {
        let d = ds.n_features();
        let mut mean = vec![0.0; d];
        let mut std = vec![1.0; d];
        for j in 0..d {
            let present: Vec<f64> = (0..ds.len()).map(|i| ds.x.get(i, j)).filter(|v| !v.is_nan()).collect();
            if present.is_empty() {
                continue;
            }
            let m = present.iter().sum::<f64>() / present.len() as f64;
            mean[j] = m;
            // missing entries sit at the mean and add nothing to the spread
            let var = present.iter().map(|v| (v - m).powi(2)).sum::<f64>() / ds.len() as f64;
            if var > 0.0 {
                std[j] = var.sqrt();
            }
        }
        Self { mean, std }
    }

    fn impute(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).map(|(&v, &m)| if v.is_nan() { m } else { v }).collect()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        self.impute(x)
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct LogisticRegression {
    scaler: Scaler,
    w: Vec<f64>,
    b: f64,
}

impl Classifier for LogisticRegression {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        let z: f64 = self.scaler.standardize(x).iter().zip(&self.w).map(|(a, b)| a * b).sum();
        sigmoid(z + self.b)
    }
}

/// Full-batch gradient descent on the mean log loss plus `lambda/2 |w|^2`
/// (intercept unpenalised), with step `1/L` from the Lipschitz bound.
fn fit_logistic(ds: &Dataset, p: &BaselineParams) -> LogisticRegression {
    let scaler = Scaler::fit(ds);
    let x: Vec<Vec<f64>> = (0..ds.len()).map(|i| scaler.standardize(ds.x.row(i))).collect();
    let n = ds.len() as f64;
    let d = ds.n_features();
    let sq: f64 = x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n;
    let step = 1.0 / (0.25 * sq + p.lr_lambda);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..p.lr_max_iter {
        let mut gw: Vec<f64> = w.iter().map(|wj| p.lr_lambda * wj).collect();
        let mut gb = 0.0;
        for (row, &yi) in x.iter().zip(&ds.y) {
            let z: f64 = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let r = (sigmoid(z) - f64::from(yi)) / n;
            gb += r;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        let norm = (gb * gb + gw.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if norm < p.lr_tol {
            break;
        }
        b -= step * gb;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= step * g;
        }
    }
    LogisticRegression { scaler, w, b }
}

enum CartNode {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<CartNode>, right: Box<CartNode> },
}

struct DecisionTree {
    scaler: Scaler,
    root: CartNode,
}

impl Classifier for DecisionTree {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        let x = self.scaler.impute(x);
        let mut node = &self.root;
        loop {
            match node {
                CartNode::Leaf(p) => return *p,
                CartNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }
}

fn gini_weighted(pos: f64, n: f64) -> f64 {
    // n * impurity
    if n == 0.0 {
        0.0
    } else {
        let p = pos / n;
        n * 2.0 * p * (1.0 - p)
    }
}

fn grow_cart(x: &[Vec<f64>], y: &[u8], rows: Vec<usize>, depth: usize, max_depth: usize) -> CartNode {
    let n = rows.len() as f64;
    let pos = rows.iter().filter(|&&i| y[i] == 1).count() as f64;
    let parent = gini_weighted(pos, n);
    if depth >= max_depth || parent == 0.0 {
        return CartNode::Leaf(pos / n);
    }
    let d = x[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..d {
        let mut sorted = rows.clone();
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_pos = 0.0;
        for k in 0..sorted.len() - 1 {
            left_pos += f64::from(y[sorted[k]]);
            let (v, next) = (x[sorted[k]][f], x[sorted[k + 1]][f]);
            if !(v < next) {
                continue;
            }
            let nl = (k + 1) as f64;
            let gain = parent - gini_weighted(left_pos, nl) - gini_weighted(pos - left_pos, n - nl);
            if gain > 0.0 && best.is_none_or(|b| gain > b.0) {
                let mut t = 0.5 * v + 0.5 * next;
                if !(t > v) {
                    t = next;
                }
                best = Some((gain, f, t));
            }
        }
    }
    match best {
        None => CartNode::Leaf(pos / n),
        Some((_, feature, threshold)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[i][feature] < threshold);
            CartNode::Split {
                feature,
                threshold,
                left: Box::new(grow_cart(x, y, l, depth + 1, max_depth)),
                right: Box::new(grow_cart(x, y, r, depth + 1, max_depth)),
            }
        }
    }
}

struct NaiveBayes {
    scaler: Scaler,
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl NaiveBayes {
    fn log_joint(&self, x: &[f64], c: usize) -> f64 {
        let ll: f64 = x
            .iter()
            .zip(self.mean[c].iter().zip(&self.var[c]))
            .map(|(v, (m, s2))| -0.5 * ((2.0 * std::f64::consts::PI * s2).ln() + (v - m).powi(2) / s2))
            .sum();
        self.log_prior[c] + ll
    }
}

impl Classifier for NaiveBayes {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        let x = self.scaler.impute(x);
        let (l0, l1) = (self.log_joint(&x, 0), self.log_joint(&x, 1));
        sigmoid(l1 - l0)
    }
}

fn fit_naive_bayes(ds: &Dataset) -> NaiveBayes {
    let scaler = Scaler::fit(ds);
    let x: Vec<Vec<f64>> = (0..ds.len()).map(|i| scaler.impute(ds.x.row(i))).collect();
    let d = ds.n_features();
    // variance floor relative to the widest feature keeps constant columns finite
    let overall_max = (0..d)
        .map(|j| {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / x.len() as f64;
            x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / x.len() as f64
        })
        .fold(0.0, f64::max);
    let eps = 1e-9 * overall_max.max(1e-300);
    let mut nb = NaiveBayes {
        scaler,
        log_prior: [0.0; 2],
        mean: [vec![0.0; d], vec![0.0; d]],
        var: [vec![0.0; d], vec![0.0; d]],
    };
    for c in 0..2 {
        let rows: Vec<&Vec<f64>> = x.iter().zip(&ds.y).filter(|(_, &y)| usize::from(y) == c).map(|(r, _)| r).collect();
        let k = rows.len() as f64;
        nb.log_prior[c] = (k / x.len() as f64).ln();
        for j in 0..d {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / k;
            nb.mean[c][j] = m;
            nb.var[c][j] = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / k + eps;
        }
    }
    nb
}

struct Knn {
    scaler: Scaler,
    k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
}

impl Knn {
    fn positives(&self, x: &[f64]) -> usize {
        let q = self.scaler.standardize(x);
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.iter().take(self.k).filter(|(_, i)| self.y[*i] == 1).count()
    }
}

impl Classifier for Knn {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self.positives(x) as f64 / self.k as f64
    }

    /// A split vote goes to class 0.
    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(2 * self.positives(x) > self.k)
    }
}

pub fn train_baseline(
    kind: BaselineKind,
    ds: &Dataset,
    params: &BaselineParams,
    _seed: u64,
) -> Result<Box<dyn Classifier>, ModelError> {
    ds.check_two_classes()?;
    Ok(match kind {
        BaselineKind::LogisticRegression => Box::new(fit_logistic(ds, params)),
        BaselineKind::DecisionTree => {
            let scaler = Scaler::fit(ds);
            let x: Vec<Vec<f64>> = (0..ds.len()).map(|i| scaler.impute(ds.x.row(i))).collect();
            let root = grow_cart(&x, &ds.y, (0..ds.len()).collect(), 0, params.dt_max_depth);
            Box::new(DecisionTree { scaler, root })
        }
        BaselineKind::NaiveBayes => Box::new(fit_naive_bayes(ds)),
        BaselineKind::Knn => {
            if params.knn_k == 0 {
                return Err(ModelError::InvalidHyperparameters("knn_k must be positive".into()));
            }
            let scaler = Scaler::fit(ds);
            let x = (0..ds.len()).map(|i| scaler.standardize(ds.x.row(i))).collect();
            Box::new(Knn { scaler, k: params.knn_k.min(ds.len()), x, y: ds.y.clone() })
        }
    })
}

#[derive(Debug, Clone)]
pub struct BaselineTrainer {
    pub kind: BaselineKind,
    pub params: BaselineParams,
}

impl Trainer for BaselineTrainer {
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        train_baseline(self.kind, train, &self.params, seed)
    }
}

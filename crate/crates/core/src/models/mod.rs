//! Classifiers, evaluation harness and metrics.
//!
//! Every model sees a dense row-major [`DesignMatrix`] where `NaN` marks a
//! missing feature. The boosted trees route missing values natively; the
//! baselines impute per training fold.

pub mod baseline;
pub mod cv;
pub mod gbdt;
pub mod metrics;
pub mod search;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{FeatureMatrix, FEATURE_NAMES};

pub use baseline::{train_baseline, BaselineKind, BaselineParams};
pub use cv::{kfold_cv, stratified_folds, summarize, MetricsSummary};
pub use gbdt::{train_gbdt, Hyperparameters, MissingPolicy, Node, Tree, TreeEnsemble};
pub use metrics::{compute_metrics, MetricsReport};
pub use search::{random_search, SearchResult, SearchSpace, SearchTrial};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training matrix")]
    EmptyMatrix,
    #[error("training labels contain a single class")]
    SingleClassData,
    #[error("schema mismatch: expected {expected} features, found {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{rows} rows cannot fill {k} folds")]
    TooFewRows { rows: usize, k: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameters(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "design matrix shape");
        Self { rows, cols, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn take_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, values)
    }

    pub fn take_cols(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let r = self.row(i);
            values.extend(cols.iter().map(|&j| r[j]));
        }
        Self::new(self.rows, cols.len(), values)
    }
}

/// Features, binary labels and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: Vec<u8>,
    pub names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DesignMatrix, y: Vec<u8>, names: Vec<String>) -> Self {
        assert_eq!(x.n_rows(), y.len());
        assert_eq!(x.n_cols(), names.len());
        Self { x, y, names }
    }

    pub fn from_matrix(m: &FeatureMatrix) -> Self {
        Self::new(m.design(), m.labels(), FEATURE_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.take_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> Self {
        Self {
            x: self.x.take_cols(cols),
            y: self.y.clone(),
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }

    pub(crate) fn check_two_classes(&self) -> Result<(), ModelError> {
        if self.is_empty() {
            return Err(ModelError::EmptyMatrix);
        }
        let pos = self.y.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == self.len() {
            return Err(ModelError::SingleClassData);
        }
        Ok(())
    }
}

/// Hex SHA-256 of the comma-joined column names.
pub fn schema_hash(names: &[String]) -> String {
    let digest = Sha256::digest(names.join(",").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// A fitted binary classifier.
pub trait Classifier: Send + Sync {
    /// Probability of class 1.
    fn predict_proba(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) >= 0.5)
    }
}

/// Anything that can fit a classifier on a training fold.
pub trait Trainer: Sync {
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn Classifier>, ModelError>;
}

impl<F> Trainer for F
where
    F: Fn(&Dataset, u64) -> Result<Box<dyn Classifier>, ModelError> + Sync,
{
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        self(train, seed)
    }
}

/// Boosted trees with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct GbdtTrainer(pub Hyperparameters);

impl Trainer for GbdtTrainer {
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(train_gbdt(train, &self.0, seed)?))
    }
}

/// Independent stream seed for sub-task `index` (splitmix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

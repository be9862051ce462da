//! Run-level procedures shared by the command line and the end-to-end tests:
//! model fitting with optional search, cross-validated evaluation, the
//! majority-resampling study, SHAP-driven selection and the condition ANOVA.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, FeatureMatrix};
use crate::explain::{self, ExplainError, ImportanceRanking, SelectionResult};
use crate::models::{
    derive_seed, kfold_cv, random_search, summarize, train_baseline, train_gbdt, BaselineKind, BaselineParams,
    Classifier, Dataset, GbdtTrainer, Hyperparameters, MetricsReport, MetricsSummary, ModelError, SearchResult,
    SearchSpace, TreeEnsemble,
};
use crate::signal::Condition;
use crate::stats::{self, AnovaResult, StatsError, TukeyResult};

pub const EVAL_FOLDS: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Random-search draws; 0 fits `hyperparameters` directly.
    pub n_iter: usize,
    pub space: SearchSpace,
    pub hyperparameters: Hyperparameters,
    pub baselines: BaselineParams,
    /// Also cross-validate the baseline classifiers during evaluation.
    pub compare_baselines: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_iter: 50,
            space: SearchSpace::default(),
            hyperparameters: Hyperparameters::default(),
            baselines: BaselineParams::default(),
            compare_baselines: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub ensemble: TreeEnsemble,
    pub search: Option<SearchResult>,
}

/// Hyperparameters picked by search (or the fixed ones), then one fit on
/// every row.
pub fn fit_model(ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainedModel, ModelError> {
    ds.check_two_classes()?;
    let search = if cfg.n_iter > 0 {
        Some(random_search(ds, &cfg.space, cfg.n_iter, derive_seed(seed, 1))?)
    } else {
        None
    };
    let hyper = search.as_ref().map_or(&cfg.hyperparameters, |s| &s.best);
    let ensemble = train_gbdt(ds, hyper, derive_seed(seed, 2))?;
    Ok(TrainedModel { ensemble, search })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub folds: Vec<MetricsReport>,
    pub mean: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `nested` tunes inside every outer fold; `fixed` reuses one set of
    /// hyperparameters across folds.
    pub mode: String,
    pub folds: usize,
    pub n_rows: usize,
    pub class_counts: ClassCounts,
    pub hyperparameters: Hyperparameters,
    /// The supplied model scored on every row (in-sample if it was trained
    /// on the same matrix).
    pub model_metrics: Option<MetricsReport>,
    pub gbdt: ModelEvaluation,
    pub baselines: Vec<ModelEvaluation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub distrust: usize,
    pub trust: usize,
}

impl ClassCounts {
    pub fn of(m: &FeatureMatrix) -> Self {
        let (distrust, trust) = m.class_counts();
        Self { distrust, trust }
    }
}

fn evaluation(model: &str, folds: Vec<MetricsReport>) -> ModelEvaluation {
    let mean = summarize(&folds);
    ModelEvaluation { model: model.to_string(), folds, mean }
}

pub fn score_model(model: &dyn Classifier, ds: &Dataset) -> Result<MetricsReport, ModelError> {
    let scores: Vec<f64> = (0..ds.len()).map(|i| model.predict_proba(ds.x.row(i))).collect();
    let pred: Vec<u8> = scores.iter().map(|&p| u8::from(p >= 0.5)).collect();
    crate::models::compute_metrics(&ds.y, &pred, &scores)
}

/// Stratified 10-fold evaluation. With `nested`, each outer training part
/// runs its own search; otherwise `hyper` is used in every fold.
pub fn evaluate(
    matrix: &FeatureMatrix,
    cfg: &TrainConfig,
    nested: bool,
    hyper: &Hyperparameters,
    model: Option<&TreeEnsemble>,
    seed: u64,
) -> Result<EvaluationReport, PipelineError> {
    let ds = Dataset::from_matrix(matrix);
    ds.check_two_classes()?;
    let cv_seed = derive_seed(seed, 3);
    let gbdt = if nested && cfg.n_iter > 0 {
        let tuned = |train: &Dataset, s: u64| -> Result<Box<dyn Classifier>, ModelError> {
            let found = random_search(train, &cfg.space, cfg.n_iter, derive_seed(s, 1))?;
            Ok(Box::new(train_gbdt(train, &found.best, derive_seed(s, 2))?))
        };
        kfold_cv(&ds, EVAL_FOLDS, &tuned, cv_seed)?
    } else {
        kfold_cv(&ds, EVAL_FOLDS, &GbdtTrainer(hyper.clone()), cv_seed)?
    };
    let mut baselines = Vec::new();
    if cfg.compare_baselines {
        for kind in BaselineKind::ALL {
            let params = cfg.baselines.clone();
            let trainer = move |train: &Dataset, s: u64| -> Result<Box<dyn Classifier>, ModelError> {
                train_baseline(kind, train, &params, s)
            };
            baselines.push(evaluation(kind.as_str(), kfold_cv(&ds, EVAL_FOLDS, &trainer, cv_seed)?));
        }
    }
    let model_metrics = match model {
        Some(m) => {
            m.check_width(ds.x.row(0))?;
            Some(score_model(m, &ds)?)
        }
        None => None,
    };
    Ok(EvaluationReport {
        mode: if nested && cfg.n_iter > 0 { "nested" } else { "fixed" }.into(),
        folds: EVAL_FOLDS,
        n_rows: ds.len(),
        class_counts: ClassCounts::of(matrix),
        hyperparameters: hyper.clone(),
        model_metrics,
        gbdt: evaluation("gbdt", gbdt),
        baselines,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleRow {
    /// `1`, `2`, `3` or `max`.
    pub multiplier: String,
    pub majority: usize,
    pub minority: usize,
    pub class_counts: ClassCounts,
    pub metrics: MetricsSummary,
}

pub const RESAMPLE_MULTIPLIERS: [Option<usize>; 4] = [Some(1), Some(2), Some(3), None];

/// Keeps every minority row and `m x minority` majority rows for m in 1, 2,
/// 3, then all rows; each configuration gets a 10-fold evaluation.
pub fn resample_study(matrix: &FeatureMatrix, hyper: &Hyperparameters, seed: u64) -> Result<Vec<ResampleRow>, PipelineError> {
    RESAMPLE_MULTIPLIERS
        .iter()
        .enumerate()
        .map(|(k, mult)| {
            let s = derive_seed(seed, k as u64);
            let sample = match mult {
                Some(m) => dataset::resample_majority(matrix, *m, s)?,
                None => FeatureMatrix { rows: matrix.rows.clone(), seed: Some(s) },
            };
            let ds = Dataset::from_matrix(&sample);
            let folds = kfold_cv(&ds, EVAL_FOLDS, &GbdtTrainer(hyper.clone()), derive_seed(s, 3))?;
            let counts = ClassCounts::of(&sample);
            Ok(ResampleRow {
                multiplier: mult.map_or("max".to_string(), |m| m.to_string()),
                majority: counts.trust.max(counts.distrust),
                minority: counts.trust.min(counts.distrust),
                class_counts: counts,
                metrics: summarize(&folds),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub hyperparameters: Hyperparameters,
    pub ranking: ImportanceRanking,
    pub selection: SelectionResult,
}

/// SHAP ranking of `model` over the matrix, then forward selection with
/// the model's hyperparameters.
pub fn select_features(matrix: &FeatureMatrix, model: &TreeEnsemble, seed: u64) -> Result<SelectionReport, PipelineError> {
    let ds = Dataset::from_matrix(matrix);
    let ranking = explain::importance_ranking(model, &ds.x)?;
    let hyper = model.hyperparameters.clone();
    let selection = explain::incremental_selection(&ds, &ranking, &GbdtTrainer(hyper.clone()), derive_seed(seed, 4))?;
    Ok(SelectionReport { hyperparameters: hyper, ranking, selection })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub condition: Condition,
    pub participants: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAnova {
    pub groups: Vec<GroupMean>,
    pub anova: AnovaResult,
    pub tukey: TukeyResult,
}

/// Ratings are first averaged per participant; the participants' means are
/// the observations. Conditions with no participants are left out.
pub fn condition_anova(
    ratings: &[(String, Condition, f64)],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<ConditionAnova, PipelineError> {
    let mut per: BTreeMap<(Condition, &str), (f64, usize)> = BTreeMap::new();
    for (p, c, r) in ratings {
        let e = per.entry((*c, p.as_str())).or_insert((0.0, 0));
        e.0 += r;
        e.1 += 1;
    }
    let mut groups = Vec::new();
    let mut data = Vec::new();
    for c in Condition::ALL {
        let means: Vec<f64> = per.iter().filter(|((k, _), _)| *k == c).map(|(_, (s, n))| s / *n as f64).collect();
        if means.is_empty() {
            continue;
        }
        groups.push(GroupMean { condition: c, participants: means.len(), mean: means.iter().sum::<f64>() / means.len() as f64 });
        data.push(means);
    }
    let anova = stats::one_way_anova(&data)?;
    let tukey = stats::tukey_hsd_with(&data, alpha, seed, draws)?;
    Ok(ConditionAnova { groups, anova, tukey })
}

//! Exact path-dependent Shapley values for tree ensembles, global importance,
//! and greedy forward feature selection driven by that importance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{kfold_cv, summarize, Dataset, DesignMatrix, ModelError, Node, Trainer, Tree, TreeEnsemble};
use crate::par;

/// A new feature must raise the mean f1 by more than this to be kept.
pub const MIN_F1_GAIN: f64 = 1e-4;
pub const SELECTION_FOLDS: usize = 10;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("tree {tree} node {node} has no usable cover statistic")]
    MissingCoverStats { tree: usize, node: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub phi: Vec<f64>,
    pub phi0: f64,
    pub margin: f64,
    /// Columns that were missing in the explained row. Their attribution
    /// reflects the default-direction routing.
    pub missing: Vec<usize>,
}

#[derive(Clone, Copy)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    let l = path.len();
    path.push(PathElem { feature, zero, one, weight: if l == 0 { 1.0 } else { 0.0 } });
    let denom = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / denom;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let PathElem { zero, one, .. } = path[i];
    let denom = (l + 1) as f64;
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = next * denom / ((j + 1) as f64 * one);
            next = t - path[j].weight * zero * (l - j) as f64 / denom;
        } else {
            path[j].weight = path[j].weight * denom / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Total permutation weight of the path with element `i` removed.
fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let PathElem { zero, one, .. } = path[i];
    let denom = (l + 1) as f64;
    let mut total = 0.0;
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = next * denom / ((j + 1) as f64 * one);
            total += t;
            next = path[j].weight - t * zero * (l - j) as f64 / denom;
        } else {
            total += path[j].weight * denom / (zero * (l - j) as f64);
        }
    }
    total
}

struct TreeWalk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    phi: &'a mut [f64],
}

impl TreeWalk<'_> {
    fn recurse(&mut self, node: usize, mut path: Vec<PathElem>, zero: f64, one: f64, feature: usize) {
        extend(&mut path, zero, one, feature);
        match self.tree.nodes[node] {
            Node::Leaf { weight, .. } => {
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let e = path[i];
                    self.phi[e.feature] += w * (e.one - e.zero) * weight;
                }
            }
            Node::Split { feature: f, threshold, default_left, left, right, cover } => {
                let v = self.x[f];
                let go_left = if v.is_nan() { default_left } else { v < threshold };
                let (hot, cold) = if go_left { (left, right) } else { (right, left) };
                let (mut iz, mut io) = (1.0, 1.0);
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == f) {
                    iz = path[k].zero;
                    io = path[k].one;
                    unwind(&mut path, k);
                }
                let hot_frac = self.tree.nodes[hot].cover() / cover;
                let cold_frac = self.tree.nodes[cold].cover() / cover;
                self.recurse(hot, path.clone(), iz * hot_frac, io, f);
                self.recurse(cold, path, iz * cold_frac, 0.0, f);
            }
        }
    }
}

/// Cover-weighted mean leaf value of a tree.
pub fn tree_expectation(tree: &Tree) -> f64 {
    fn go(t: &Tree, i: usize) -> f64 {
        match t.nodes[i] {
            Node::Leaf { weight, .. } => weight,
            Node::Split { left, right, cover, .. } => {
                (t.nodes[left].cover() / cover) * go(t, left) + (t.nodes[right].cover() / cover) * go(t, right)
            }
        }
    }
    go(tree, 0)
}

fn check_covers(e: &TreeEnsemble) -> Result<(), ExplainError> {
    for (t, tree) in e.trees.iter().enumerate() {
        for (i, node) in tree.nodes.iter().enumerate() {
            let c = node.cover();
            let bad = !(c.is_finite() && c >= 0.0) || (matches!(node, Node::Split { .. }) && c <= 0.0);
            if bad {
                return Err(ExplainError::MissingCoverStats { tree: t, node: i });
            }
        }
    }
    Ok(())
}

/// Raw per-tree attributions (unscaled leaf values) added into `phi`.
pub fn tree_contributions(tree: &Tree, x: &[f64], phi: &mut [f64]) {
    TreeWalk { tree, x, phi }.recurse(0, Vec::with_capacity(16), 1.0, 1.0, NO_FEATURE);
}

fn shap_unchecked(e: &TreeEnsemble, x: &[f64]) -> ShapAttribution {
    let d = e.n_features();
    let mut phi = vec![0.0; d];
    let mut tree_phi = vec![0.0; d];
    let mut phi0 = e.base_margin;
    for tree in &e.trees {
        tree_phi.fill(0.0);
        tree_contributions(tree, x, &mut tree_phi);
        for (p, t) in phi.iter_mut().zip(&tree_phi) {
            *p += e.eta * t;
        }
        phi0 += e.eta * tree_expectation(tree);
    }
    ShapAttribution {
        phi,
        phi0,
        margin: e.margin(x),
        missing: (0..d).filter(|&j| x[j].is_nan()).collect(),
    }
}

pub fn tree_shap(e: &TreeEnsemble, x: &[f64]) -> Result<ShapAttribution, ExplainError> {
    e.check_width(x)?;
    check_covers(e)?;
    Ok(shap_unchecked(e, x))
}

/// Attributions for every row, in row order.
pub fn shap_matrix(e: &TreeEnsemble, x: &DesignMatrix) -> Result<Vec<ShapAttribution>, ExplainError> {
    if x.n_cols() != e.n_features() {
        return Err(ModelError::SchemaMismatch { expected: e.n_features(), found: x.n_cols() }.into());
    }
    check_covers(e)?;
    Ok(par::map(x.n_rows(), |i| shap_unchecked(e, x.row(i))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub name: String,
    pub mean_abs_phi: f64,
}

/// Features by descending mean |phi|; ties keep column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub features: Vec<RankedFeature>,
}

impl ImportanceRanking {
    pub fn order(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.index).collect()
    }
}

pub fn importance_ranking(e: &TreeEnsemble, x: &DesignMatrix) -> Result<ImportanceRanking, ExplainError> {
    if x.n_rows() == 0 {
        return Err(ModelError::EmptyMatrix.into());
    }
    let shap = shap_matrix(e, x)?;
    Ok(ranking_from_attributions(&shap, &e.feature_names))
}

pub fn ranking_from_attributions(shap: &[ShapAttribution], names: &[String]) -> ImportanceRanking {
    let n = shap.len() as f64;
    let mut features: Vec<RankedFeature> = (0..names.len())
        .map(|j| RankedFeature {
            index: j,
            name: names[j].clone(),
            mean_abs_phi: shap.iter().map(|s| s.phi[j].abs()).sum::<f64>() / n,
        })
        .collect();
    features.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi).then(a.index.cmp(&b.index)));
    ImportanceRanking { features }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub added: usize,
    pub name: String,
    pub features: Vec<usize>,
    pub mean_f1: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub trace: Vec<SelectionStep>,
}

/// Forward selection in ranking order. The top feature is always kept; each
/// later one is kept only if the 10-fold mean f1 rises by more than
/// [`MIN_F1_GAIN`], and the first rejection ends the search.
pub fn incremental_selection(
    ds: &Dataset,
    ranking: &ImportanceRanking,
    trainer: &dyn Trainer,
    seed: u64,
) -> Result<SelectionResult, ExplainError> {
    let order = ranking.order();
    let mut selected: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for &f in &order {
        let mut candidate = selected.clone();
        candidate.push(f);
        let f1 = summarize(&kfold_cv(&ds.select_features(&candidate), SELECTION_FOLDS, trainer, seed)?).f1;
        let accepted = selected.is_empty() || f1 > best + MIN_F1_GAIN;
        trace.push(SelectionStep {
            added: f,
            name: ds.names[f].clone(),
            features: candidate.clone(),
            mean_f1: f1,
            accepted,
        });
        if !accepted {
            break;
        }
        selected = candidate;
        best = f1;
    }
    Ok(SelectionResult {
        selected_names: selected.iter().map(|&j| ds.names[j].clone()).collect(),
        selected,
        trace,
    })
}

/// `row,phi0,phi_<name>...,margin` with one line per explained row.
pub fn write_attributions(path: &Path, names: &[String], shap: &[ShapAttribution]) -> Result<(), ExplainError> {
    let io = |e: &dyn std::fmt::Display| ExplainError::Io(format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(|e| io(&e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    let mut header = vec!["row".to_string(), "phi0".to_string()];
    header.extend(names.iter().map(|n| format!("phi_{n}")));
    header.push("margin".into());
    w.write_record(&header).map_err(|e| io(&e))?;
    for (i, s) in shap.iter().enumerate() {
        let mut rec = vec![i.to_string(), s.phi0.to_string()];
        rec.extend(s.phi.iter().map(|p| p.to_string()));
        rec.push(s.margin.to_string());
        w.write_record(&rec).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}

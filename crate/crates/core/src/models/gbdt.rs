//! Second-order gradient boosting of regression trees under the logistic
//! loss, with exact greedy split search and learned default directions for
//! missing values.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{schema_hash, Classifier, Dataset, DesignMatrix, ModelError};
use crate::par;

pub const FORMAT_VERSION: u32 = 1;

/// Below this many (row, feature) pairs a node is searched sequentially.
const PAR_SPLIT_WORK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub n_trees: usize,
    pub max_depth: usize,
    pub eta: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split.
    pub gamma: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub min_child_weight: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 4,
            eta: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::InvalidHyperparameters(what.to_string()));
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.eta) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be finite and non-negative");
        }
        if !unit(self.subsample) || !unit(self.colsample) {
            return bad("subsample and colsample must lie in (0, 1]");
        }
        if !(self.min_child_weight.is_finite() && self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be finite and non-negative");
        }
        Ok(())
    }
}

/// How rows with a missing split feature are handled during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Try both sides and keep the one with the larger gain.
    #[default]
    Learn,
    /// Always send missing values left.
    AlwaysLeft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Node {
    Leaf {
        weight: f64,
        cover: f64,
    },
    /// `x < threshold` goes left; missing follows `default_left`.
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Leaf { cover, .. } | Node::Split { cover, .. } => cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    /// Root at index 0; children always follow their parent.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, default_left, left, right, .. } => {
                    let v = x[feature];
                    let go_left = if v.is_nan() { default_left } else { v < threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { weight, .. } => weight,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    fn check(&self, n_features: usize) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::Format("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { feature, threshold, left, right, .. } = *node {
                if feature >= n_features || !threshold.is_finite() {
                    return Err(ModelError::Format(format!("node {i}: bad split")));
                }
                let n = self.nodes.len();
                if left <= i || right <= i || left >= n || right >= n {
                    return Err(ModelError::Format(format!("node {i}: bad child index")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeEnsemble {
    pub format_version: u32,
    pub schema_hash: String,
    pub feature_names: Vec<String>,
    pub base_margin: f64,
    pub eta: f64,
    pub hyperparameters: Hyperparameters,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// `base_margin + eta * leaf_1(x) + ... + eta * leaf_n(x)`, summed in tree order.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_margin, |m, t| m + self.eta * t.predict(x))
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_width(x)?;
        Ok(self.margin(x))
    }

    pub fn predict_proba_checked(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.predict_margin(x).map(logistic)
    }

    pub fn check_width(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::SchemaMismatch { expected: self.n_features(), found: x.len() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let e: Self = serde_json::from_str(text).map_err(|err| ModelError::Format(err.to_string()))?;
        if e.format_version != FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported format version {}", e.format_version)));
        }
        if e.schema_hash != schema_hash(&e.feature_names) {
            return Err(ModelError::Format("schema hash does not match feature names".into()));
        }
        for t in &e.trees {
            t.check(e.n_features())?;
        }
        Ok(e)
    }
}

impl Classifier for TreeEnsemble {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        logistic(self.margin(x))
    }
}

pub fn logistic(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

pub fn train_gbdt(ds: &Dataset, hyper: &Hyperparameters, seed: u64) -> Result<TreeEnsemble, ModelError> {
    train_gbdt_with(ds, hyper, seed, MissingPolicy::Learn)
}

pub fn train_gbdt_with(
    ds: &Dataset,
    hyper: &Hyperparameters,
    seed: u64,
    policy: MissingPolicy,
) -> Result<TreeEnsemble, ModelError> {
    hyper.validate()?;
    ds.check_two_classes()?;
    let n = ds.len();
    let d = ds.n_features();
    let x = &ds.x;
    let y: Vec<f64> = ds.y.iter().map(|&v| f64::from(v)).collect();

    let p1 = y.iter().sum::<f64>() / n as f64;
    let base_margin = (p1 / (1.0 - p1)).ln();

    // Present rows of every feature, by value then row index.
    let presorted: Vec<Vec<u32>> = par::map(d, |f| {
        let mut rows: Vec<u32> = (0..n as u32).filter(|&i| !x.get(i as usize, f).is_nan()).collect();
        rows.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
        rows
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = vec![base_margin; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trees = Vec::with_capacity(hyper.n_trees);
    let mut in_sample = vec![true; n];

    for _ in 0..hyper.n_trees {
        for i in 0..n {
            let p = logistic(margin[i]);
            g[i] = p - y[i];
            h[i] = p * (1.0 - p);
        }
        let rows: Vec<u32> = if hyper.subsample < 1.0 {
            let k = ((hyper.subsample * n as f64).round() as usize).clamp(1, n);
            let mut picked: Vec<u32> = index::sample(&mut rng, n, k).into_iter().map(|i| i as u32).collect();
            picked.sort_unstable();
            in_sample.fill(false);
            for &i in &picked {
                in_sample[i as usize] = true;
            }
            picked
        } else {
            (0..n as u32).collect()
        };
        let features: Vec<usize> = if hyper.colsample < 1.0 {
            let k = ((hyper.colsample * d as f64).ceil() as usize).clamp(1, d);
            let mut picked = index::sample(&mut rng, d, k).into_vec();
            picked.sort_unstable();
            picked
        } else {
            (0..d).collect()
        };
        let sorted: Vec<Vec<u32>> = features
            .iter()
            .map(|&f| {
                presorted[f]
                    .iter()
                    .copied()
                    .filter(|&i| in_sample[i as usize])
                    .collect()
            })
            .collect();

        let mut grower = Grower {
            x,
            g: &g,
            h: &h,
            hyper,
            policy,
            features: &features,
            nodes: Vec::new(),
            go_left: vec![false; n],
        };
        grower.grow(rows, sorted, 0);
        let tree = Tree { nodes: grower.nodes };
        for (i, m) in margin.iter_mut().enumerate() {
            *m += hyper.eta * tree.predict(x.row(i));
        }
        trees.push(tree);
    }

    Ok(TreeEnsemble {
        format_version: FORMAT_VERSION,
        schema_hash: schema_hash(&ds.names),
        feature_names: ds.names.clone(),
        base_margin,
        eta: hyper.eta,
        hyperparameters: hyper.clone(),
        trees,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

struct Grower<'a> {
    x: &'a DesignMatrix,
    g: &'a [f64],
    h: &'a [f64],
    hyper: &'a Hyperparameters,
    policy: MissingPolicy,
    /// Columns drawn for this tree, parallel to the sorted lists.
    features: &'a [usize],
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.hyper.lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn grow(&mut self, rows: Vec<u32>, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let (gs, hs) = rows
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + self.g[i as usize], b + self.h[i as usize]));
        let denom = hs + self.hyper.lambda;
        let weight = if denom > 0.0 { -gs / denom } else { 0.0 };
        self.nodes.push(Node::Leaf { weight, cover: hs });

        if depth >= self.hyper.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(best) = self.best_split(&rows, &sorted, gs, hs) else {
            return id;
        };

        let col = best.feature;
        let f = self.features[col];
        for &i in &rows {
            let v = self.x.get(i as usize, f);
            self.go_left[i as usize] = if v.is_nan() { best.default_left } else { v < best.threshold };
        }
        let split = |list: Vec<u32>, go: &[bool]| -> (Vec<u32>, Vec<u32>) {
            list.into_iter().partition(|&i| go[i as usize])
        };
        let (rows_l, rows_r) = split(rows, &self.go_left);
        let mut sorted_l = Vec::with_capacity(sorted.len());
        let mut sorted_r = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r) = split(list, &self.go_left);
            sorted_l.push(l);
            sorted_r.push(r);
        }
        let left = self.grow(rows_l, sorted_l, depth + 1);
        let right = self.grow(rows_r, sorted_r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: f,
            threshold: best.threshold,
            default_left: best.default_left,
            left,
            right,
            cover: hs,
        };
        id
    }

    fn best_split(&self, rows: &[u32], sorted: &[Vec<u32>], gs: f64, hs: f64) -> Option<Candidate> {
        let search = |col: usize| self.best_for_feature(col, &sorted[col], rows.len(), gs, hs);
        let per_feature: Vec<Option<Candidate>> = if rows.len() * sorted.len() >= PAR_SPLIT_WORK {
            par::map(sorted.len(), search)
        } else {
            (0..sorted.len()).map(search).collect()
        };
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        best
    }

    fn best_for_feature(&self, col: usize, list: &[u32], n_rows: usize, gs: f64, hs: f64) -> Option<Candidate> {
        if list.len() < 2 {
            return None;
        }
        let f = self.features[col];
        let (gp, hp) = list
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + self.g[i as usize], b + self.h[i as usize]));
        let (gm, hm) = (gs - gp, hs - hp);
        let has_missing = list.len() < n_rows;
        let parent = self.score(gs, hs);
        let mcw = self.hyper.min_child_weight;

        let mut best: Option<Candidate> = None;
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 0..list.len() - 1 {
            let i = list[k] as usize;
            gl += self.g[i];
            hl += self.h[i];
            let v = self.x.get(i, f);
            let next = self.x.get(list[k + 1] as usize, f);
            if !(v < next) {
                continue;
            }
            let (gr, hr) = (gp - gl, hp - hl);
            let mut threshold = 0.5 * v + 0.5 * next;
            if !(threshold > v) {
                threshold = next;
            }
            let sides: &[(bool, f64, f64, f64, f64)] = if has_missing && self.policy == MissingPolicy::Learn {
                &[(true, gl + gm, hl + hm, gr, hr), (false, gl, hl, gr + gm, hr + hm)]
            } else {
                &[(true, gl + gm, hl + hm, gr, hr)]
            };
            for &(default_left, g_l, h_l, g_r, h_r) in sides {
                if h_l < mcw || h_r < mcw {
                    continue;
                }
                let gain = 0.5 * (self.score(g_l, h_l) + self.score(g_r, h_r) - parent) - self.hyper.gamma;
                if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate { gain, feature: col, threshold, default_left });
                }
            }
        }
        best
    }
}

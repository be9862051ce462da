use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, kfold_cv, summarize, Dataset, GbdtTrainer, Hyperparameters, ModelError};
use crate::par;

/// Folds used to score each candidate.
pub const SEARCH_FOLDS: usize = 5;

/// Inclusive bounds for every hyperparameter. `eta` and `lambda` are drawn
/// log-uniformly, the rest uniformly (integers over the integer range).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub n_trees: (usize, usize),
    pub max_depth: (usize, usize),
    pub eta: (f64, f64),
    pub lambda: (f64, f64),
    pub gamma: (f64, f64),
    pub subsample: (f64, f64),
    pub colsample: (f64, f64),
    pub min_child_weight: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_trees: (50, 400),
            max_depth: (2, 8),
            eta: (0.01, 0.3),
            lambda: (0.1, 10.0),
            gamma: (0.0, 5.0),
            subsample: (0.5, 1.0),
            colsample: (0.5, 1.0),
            min_child_weight: (1.0, 10.0),
        }
    }
}

impl SearchSpace {
    /// Every draw equals `h`.
    pub fn point(h: &Hyperparameters) -> Self {
        Self {
            n_trees: (h.n_trees, h.n_trees),
            max_depth: (h.max_depth, h.max_depth),
            eta: (h.eta, h.eta),
            lambda: (h.lambda, h.lambda),
            gamma: (h.gamma, h.gamma),
            subsample: (h.subsample, h.subsample),
            colsample: (h.colsample, h.colsample),
            min_child_weight: (h.min_child_weight, h.min_child_weight),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        let ok = self.n_trees.0 <= self.n_trees.1
            && self.max_depth.0 <= self.max_depth.1
            && [self.eta, self.lambda, self.gamma, self.subsample, self.colsample, self.min_child_weight]
                .into_iter()
                .all(ordered)
            && self.eta.0 > 0.0
            && self.lambda.0 > 0.0;
        if !ok {
            return Err(ModelError::InvalidHyperparameters("search space bounds".into()));
        }
        // the corners must be valid hyperparameters
        for pick in [|r: (f64, f64)| r.0, |r: (f64, f64)| r.1] {
            Hyperparameters {
                n_trees: self.n_trees.0,
                max_depth: self.max_depth.0,
                eta: pick(self.eta),
                lambda: pick(self.lambda),
                gamma: pick(self.gamma),
                subsample: pick(self.subsample),
                colsample: pick(self.colsample),
                min_child_weight: pick(self.min_child_weight),
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Hyperparameters {
        let uniform = |rng: &mut _, (lo, hi): (f64, f64)| if lo == hi { lo } else { Rng::random_range(rng, lo..=hi) };
        let log_uniform = |rng: &mut _, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                let u: f64 = Rng::random_range(rng, lo.ln()..=hi.ln());
                u.exp().clamp(lo, hi)
            }
        };
        Hyperparameters {
            n_trees: rng.random_range(self.n_trees.0..=self.n_trees.1),
            max_depth: rng.random_range(self.max_depth.0..=self.max_depth.1),
            eta: log_uniform(rng, self.eta),
            lambda: log_uniform(rng, self.lambda),
            gamma: uniform(rng, self.gamma),
            subsample: uniform(rng, self.subsample),
            colsample: uniform(rng, self.colsample),
            min_child_weight: uniform(rng, self.min_child_weight),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub index: usize,
    pub hyperparameters: Hyperparameters,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Hyperparameters,
    pub best_index: usize,
    pub best_f1: f64,
    pub trace: Vec<SearchTrial>,
}

/// `n_iter` independent draws, each scored by the mean f1 of a stratified
/// 5-fold CV; the first draw with the highest score wins.
pub fn random_search(ds: &Dataset, space: &SearchSpace, n_iter: usize, seed: u64) -> Result<SearchResult, ModelError> {
    if n_iter == 0 {
        return Err(ModelError::InvalidHyperparameters("n_iter must be at least 1".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Hyperparameters> = (0..n_iter).map(|_| space.draw(&mut rng)).collect();
    let cv_seed = derive_seed(seed, u64::MAX);
    let trace: Vec<SearchTrial> = par::map(n_iter, |i| {
        let reports = kfold_cv(ds, SEARCH_FOLDS, &GbdtTrainer(draws[i].clone()), cv_seed)?;
        Ok(SearchTrial { index: i, hyperparameters: draws[i].clone(), mean_f1: summarize(&reports).f1 })
    })
    .into_iter()
    .collect::<Result<_, ModelError>>()?;
    let mut best = 0;
    for t in &trace {
        if t.mean_f1 > trace[best].mean_f1 {
            best = t.index;
        }
    }
    Ok(SearchResult {
        best: trace[best].hyperparameters.clone(),
        best_index: best,
        best_f1: trace[best].mean_f1,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DesignMatrix;

    fn small_set() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..120 {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            rows.push(vec![a, b]);
            y.push(u8::from(a + 0.3 * rng.random::<f64>() > 0.6));
        }
        Dataset::new(DesignMatrix::from_rows(&rows), y, vec!["a".into(), "b".into()])
    }

    fn quick_space() -> SearchSpace {
        SearchSpace { n_trees: (5, 20), max_depth: (1, 3), ..Default::default() }
    }

    #[test]
    fn draws_stay_in_bounds() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let h = space.draw(&mut rng);
            assert!((50..=400).contains(&h.n_trees));
            assert!((2..=8).contains(&h.max_depth));
            assert!((0.01..=0.3).contains(&h.eta));
            assert!((0.1..=10.0).contains(&h.lambda));
            assert!((0.0..=5.0).contains(&h.gamma));
            assert!((0.5..=1.0).contains(&h.subsample));
            assert!((1.0..=10.0).contains(&h.min_child_weight));
            h.validate().unwrap();
        }
    }

    #[test]
    fn single_draw_wins() {
        let r = random_search(&small_set(), &quick_space(), 1, 9).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.best, r.trace[0].hyperparameters);
    }

    #[test]
    fn repeat_is_identical() {
        let a = random_search(&small_set(), &quick_space(), 4, 2).unwrap();
        let b = random_search(&small_set(), &quick_space(), 4, 2).unwrap();
        assert_eq!(a, b);
        let best = a.trace.iter().map(|t| t.mean_f1).fold(f64::MIN, f64::max);
        assert_eq!(a.best_f1, best);
        assert!(a.trace[..a.best_index].iter().all(|t| t.mean_f1 < best));
    }

    #[test]
    fn point_space() {
        let h = Hyperparameters { n_trees: 10, max_depth: 2, ..Default::default() };
        let ds = small_set();
        let r = random_search(&ds, &SearchSpace::point(&h), 3, 5).unwrap();
        assert_eq!(r.best, h);
        let direct = summarize(&kfold_cv(&ds, SEARCH_FOLDS, &GbdtTrainer(h), derive_seed(5, u64::MAX)).unwrap()).f1;
        assert_eq!(r.best_f1, direct);
        assert!(r.trace.iter().all(|t| t.mean_f1 == direct));
    }

    #[test]
    fn invalid_space() {
        let bad = SearchSpace { eta: (0.3, 0.01), ..Default::default() };
        assert!(random_search(&small_set(), &bad, 1, 0).is_err());
        assert!(random_search(&small_set(), &SearchSpace::default(), 0, 0).is_err());
    }
}

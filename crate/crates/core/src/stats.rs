//! One-way ANOVA and Tukey–Kramer pairwise comparisons with a Monte Carlo
//! studentized-range null.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::models::derive_seed;
use crate::par;

pub const DEFAULT_DRAWS: usize = 100_000;
/// The null draws are split into this many independently seeded chunks so
/// the result does not depend on the worker count.
const CHUNKS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two groups of at least two observations")]
    TooFewObservations,
    #[error("all within-group variance is zero")]
    DegenerateGroups,
    #[error("observations must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    #[serde(rename = "F")]
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    pub group_means: Vec<f64>,
    pub ms_within: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Upper tail of F(d1, d2) at `f`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(StatsError::TooFewObservations);
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ss_between: f64 = groups.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (df_between, df_within) = (k - 1, n - k);
    let ms_within = ss_within / df_within as f64;
    let ms_between = ss_between / df_between as f64;
    if ss_within == 0.0 {
        if ss_between == 0.0 {
            // every observation equal: nothing differs
            return Ok(AnovaResult { f: 0.0, df_between, df_within, p: 1.0, group_means: means, ms_within });
        }
        return Err(StatsError::DegenerateGroups);
    }
    let f = ms_between / ms_within;
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p: f_upper_tail(f, df_between as f64, df_within as f64),
        group_means: means,
        ms_within,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub pair: (usize, usize),
    /// `mean[pair.1] - mean[pair.0]`.
    pub mean_difference: f64,
    pub q: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub alpha: f64,
    pub draws: usize,
    pub pairs: Vec<TukeyPair>,
}

impl TukeyResult {
    pub fn get(&self, a: usize, b: usize) -> Option<&TukeyPair> {
        let key = (a.min(b), a.max(b));
        self.pairs.iter().find(|p| p.pair == key)
    }
}

/// Largest pairwise studentized range over the groups.
fn max_q(groups: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let n: usize = groups.iter().map(Vec::len).sum();
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let msw = ssw / (n - groups.len()) as f64;
    let mut best: f64 = 0.0;
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            best = best.max(q_stat(means[i], means[j], groups[i].len(), groups[j].len(), msw));
        }
    }
    best
}

fn q_stat(mi: f64, mj: f64, ni: usize, nj: usize, msw: f64) -> f64 {
    (mi - mj).abs() / (msw / 2.0 * (1.0 / ni as f64 + 1.0 / nj as f64)).sqrt()
}

/// Null distribution of the maximum studentized range for these group
/// sizes, from `draws` simulated standard-normal data sets.
pub fn null_max_q(sizes: &[usize], draws: usize, seed: u64) -> Vec<f64> {
    let per_chunk = draws.div_ceil(CHUNKS);
    par::map(CHUNKS, |c| {
        let count = per_chunk.min(draws.saturating_sub(c * per_chunk));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
        let mut groups: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
        (0..count)
            .map(|_| {
                for g in groups.iter_mut() {
                    for v in g.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                }
                max_q(&groups)
            })
            .collect::<Vec<f64>>()
    })
    .concat()
}

pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64, seed: u64) -> Result<TukeyResult, StatsError> {
    tukey_hsd_with(groups, alpha, seed, DEFAULT_DRAWS)
}

pub fn tukey_hsd_with(groups: &[Vec<f64>], alpha: f64, seed: u64, draws: usize) -> Result<TukeyResult, StatsError> {
    let anova = one_way_anova(groups)?;
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let mut null = null_max_q(&sizes, draws, seed);
    null.sort_by(f64::total_cmp);
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (mi, mj) = (anova.group_means[i], anova.group_means[j]);
            let q = if anova.ms_within == 0.0 {
                0.0
            } else {
                q_stat(mi, mj, sizes[i], sizes[j], anova.ms_within)
            };
            // fraction of null draws at least as extreme
            let below = null.partition_point(|&v| v < q);
            let p_adjusted = (null.len() - below) as f64 / null.len() as f64;
            pairs.push(TukeyPair { pair: (i, j), mean_difference: mj - mi, q, p_adjusted, significant: p_adjusted < alpha });
        }
    }
    Ok(TukeyResult { alpha, draws, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let a = one_way_anova(&g).unwrap();
        assert_eq!(a.f, 0.0);
        assert_eq!(a.p, 1.0);
        assert_eq!((a.df_between, a.df_within), (1, 4));
    }

    #[test]
    fn zero_within_variance() {
        assert_eq!(one_way_anova(&[vec![0.0, 0.0], vec![1.0, 1.0]]), Err(StatsError::DegenerateGroups));
        assert_eq!(one_way_anova(&[vec![0.0, 0.0]]), Err(StatsError::TooFewObservations));
        assert_eq!(one_way_anova(&[vec![0.0], vec![1.0, 2.0]]), Err(StatsError::TooFewObservations));
    }

    #[test]
    fn tail_matches_known_quantiles() {
        // F(2, 47) 0.95 quantile is about 3.195; F(1, 10) 0.99 quantile about 10.044
        assert!((f_upper_tail(3.195, 2.0, 47.0) - 0.05).abs() < 5e-4);
        assert!((f_upper_tail(10.044, 1.0, 10.0) - 0.01).abs() < 5e-5);
        // F(2, d) has the closed form tail (1 + 2F/d)^(-d/2)
        for f in [0.1f64, 1.0, 4.0, 22.323] {
            let exact = (1.0 + 2.0 * f / 47.0).powf(-47.0 / 2.0);
            assert!((f_upper_tail(f, 2.0, 47.0) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_is_monotone() {
        let ps: Vec<f64> = (0..200).map(|i| f_upper_tail(i as f64 * 0.25, 2.0, 30.0)).collect();
        assert!(ps.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_groups_tukey() {
        let g = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        let t = tukey_hsd_with(&g, 0.05, 1, 20_000).unwrap();
        assert!(t.pairs.iter().all(|p| p.p_adjusted >= 0.99 && !p.significant));
    }

    #[test]
    fn draws_split_exactly() {
        assert_eq!(null_max_q(&[3, 3], 1001, 0).len(), 1001);
        assert_eq!(null_max_q(&[3, 3], 5, 0).len(), 5);
    }
}

//! Independent reference implementations and seeded generators shared by
//! the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trustphys::dataset::{FeatureVector, FeatureMatrix, N_FEATURES};
use trustphys::models::{Node, Tree};
use trustphys::signal::{Condition, GazePoint, Screen};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------- fixations ----------

fn spread(points: &[GazePoint]) -> f64 {
    let fold = |f: fn(&GazePoint) -> f64| {
        points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = fold(|p| p.x);
    let (y0, y1) = fold(|p| p.y);
    (x1 - x0) + (y1 - y0)
}

fn valid_group(points: &[GazePoint], threshold: f64) -> bool {
    points.iter().all(|p| p.screen == points[0].screen) && spread(points) <= threshold
}

/// Brute-force segmentation: from each start, the longest group of
/// consecutive samples that is valid (one screen, dispersion within the
/// threshold) is found by checking every candidate end from scratch. Long
/// enough groups are kept and consumed; otherwise the start advances by one.
/// Returns `(first sample, sample count)` pairs.
pub fn idt_oracle(points: &[GazePoint], rate: f64, threshold: f64, min_duration: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let longest = (i..points.len())
            .take_while(|&j| valid_group(&points[i..=j], threshold))
            .last()
            .expect("a single sample is always valid");
        let count = longest - i + 1;
        // k samples span k sample periods
        if count as f64 / rate >= min_duration - 1e-9 {
            out.push((i, count));
            i = longest + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Random trace made of short clusters on random screens, with occasional
/// stray samples.
pub fn gaze_trace(r: &mut ChaCha8Rng, max_len: usize) -> Vec<GazePoint> {
    let n = r.random_range(1..=max_len);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let screen = Screen::ALL[r.random_range(0..4)];
        let (cx, cy) = (r.random_range(0.1..0.9), r.random_range(0.1..0.9));
        let spread = [0.0, 0.005, 0.02, 0.08][r.random_range(0..4)];
        for _ in 0..r.random_range(1..12) {
            out.push(GazePoint {
                x: cx + r.random_range(-spread..=spread),
                y: cy + r.random_range(-spread..=spread),
                screen,
            });
        }
    }
    out.truncate(n);
    out
}

// ---------- Shapley values ----------

/// Conditional expectation of the tree given only the features in `known`
/// (bit mask): known features follow `x`, unknown ones average the children
/// by cover.
fn cond_expectation(tree: &Tree, node: usize, x: &[f64], known: u32) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { weight, .. } => weight,
        Node::Split { feature, threshold, default_left, left, right, .. } => {
            if known & (1 << feature) != 0 {
                let v = x[feature];
                let go_left = if v.is_nan() { default_left } else { v < threshold };
                cond_expectation(tree, if go_left { left } else { right }, x, known)
            } else {
                let (cl, cr) = (tree.nodes[left].cover(), tree.nodes[right].cover());
                (cl * cond_expectation(tree, left, x, known) + cr * cond_expectation(tree, right, x, known)) / (cl + cr)
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values by enumerating all 2^m coalitions.
pub fn shapley_oracle(tree: &Tree, x: &[f64]) -> (Vec<f64>, f64) {
    let m = x.len();
    let mut phi = vec![0.0; m];
    for i in 0..m {
        for s in 0u32..(1 << m) {
            if s & (1 << i) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = factorial(size) * factorial(m - size - 1) / factorial(m);
            phi[i] += w * (cond_expectation(tree, 0, x, s | (1 << i)) - cond_expectation(tree, 0, x, s));
        }
    }
    (phi, cond_expectation(tree, 0, x, 0))
}

/// Random tree of depth at most `max_depth` over `m` features, with
/// positive leaf covers summed into their parents.
pub fn random_tree(r: &mut ChaCha8Rng, m: usize, max_depth: usize) -> Tree {
    fn grow(r: &mut ChaCha8Rng, nodes: &mut Vec<Node>, m: usize, depth: usize) -> usize {
        let at = nodes.len();
        if depth == 0 || r.random_bool(0.25) {
            nodes.push(Node::Leaf { weight: r.random_range(-2.0..2.0), cover: r.random_range(0.5..20.0) });
            return at;
        }
        nodes.push(Node::Leaf { weight: 0.0, cover: 0.0 });
        let left = grow(r, nodes, m, depth - 1);
        let right = grow(r, nodes, m, depth - 1);
        nodes[at] = Node::Split {
            feature: r.random_range(0..m),
            threshold: r.random_range(-1.0..1.0),
            default_left: r.random_bool(0.5),
            left,
            right,
            cover: nodes[left].cover() + nodes[right].cover(),
        };
        at
    }
    let mut nodes = Vec::new();
    grow(r, &mut nodes, m, max_depth);
    Tree { nodes }
}

// ---------- skin conductance ----------

/// Unit-peak Bateman kernel on the sample grid, from the textbook formula.
pub fn bateman(tau_rise: f64, tau_decay: f64, rate: f64, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / rate;
            (-t / tau_decay).exp() - (-t / tau_rise).exp()
        })
        .collect();
    let peak = raw.iter().copied().fold(f64::MIN, f64::max);
    raw.iter().map(|v| v / peak).collect()
}

pub struct PlantedEda {
    pub tonic: Vec<f64>,
    pub phasic: Vec<f64>,
    /// `(sample index, amplitude)`.
    pub pulses: Vec<(usize, f64)>,
}

/// `n` samples: slow tonic drift plus well separated unit-peak responses.
pub fn planted_eda(r: &mut ChaCha8Rng, n: usize, rate: f64) -> PlantedEda {
    let kernel = bateman(0.75, 2.0, rate, (5.0 * 2.0 * rate) as usize + 1);
    let mut pulses = Vec::new();
    let mut i = r.random_range(8..40);
    while i + kernel.len() < n {
        pulses.push((i, r.random_range(0.05..1.0)));
        i += r.random_range((2.0 * rate) as usize..(8.0 * rate) as usize);
    }
    let mut phasic = vec![0.0; n];
    for &(at, a) in &pulses {
        for (k, v) in kernel.iter().enumerate().take(n - at) {
            phasic[at + k] += a * v;
        }
    }
    let (level, slope) = (r.random_range(1.0..10.0), r.random_range(-0.01..0.01));
    let tonic = (0..n).map(|i| level + slope * i as f64 / rate).collect();
    PlantedEda { tonic, phasic, pulses }
}

// ---------- pulse trains ----------

/// Gaussian pulses of width 0.08 s at the beat times, sampled at `rate`.
pub fn pulse_train(beats: &[f64], rate: f64, duration: f64) -> (Vec<f64>, Vec<f64>) {
    let n = (duration * rate) as usize;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
    let values = times
        .iter()
        .map(|t| beats.iter().map(|b| (-0.5 * ((t - b) / 0.08).powi(2)).exp()).sum())
        .collect();
    (times, values)
}

// ---------- feature matrices ----------

/// 17 standard-normal features, labels a deterministic axis-aligned rule of
/// the first three: positive when `x0 > -0.5` and (`x1 > -1` or `x2 > 0`).
pub fn separable_matrix(seed: u64, rows: usize) -> FeatureMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(seed);
    let rows = (0..rows)
        .map(|i| {
            let mut features = [None; N_FEATURES];
            for f in features.iter_mut() {
                *f = Some(StandardNormal.sample(&mut r));
            }
            let x = |j: usize| features[j].unwrap();
            let label = u8::from(x(0) > -0.5 && (x(1) > -1.0 || x(2) > 0.0));
            FeatureVector {
                participant_id: format!("p{:03}", i / 40),
                condition: Condition::ALL[i % 3],
                label_time: 25.0 * (i % 40 + 1) as f64,
                rating: if label == 1 { 7 } else { 3 },
                label,
                features,
            }
        })
        .collect();
    FeatureMatrix { rows, seed: None }
}

/// Blanks each feature value independently with probability `p`.
pub fn mcar(m: &FeatureMatrix, p: f64, seed: u64) -> FeatureMatrix {
    let mut r = rng(seed);
    let mut out = m.clone();
    for row in &mut out.rows {
        for f in row.features.iter_mut() {
            if r.random_bool(p) {
                *f = None;
            }
        }
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

//! Non-negative least squares for causal convolution operators.
//!
//! Solves `min ||y - B d||^2  s.t. d >= 0` where `B` is the lower-triangular
//! Toeplitz operator of a finite kernel. The Lawson-Hanson active-set method
//! is run on consecutive blocks of the signal. Each block sees the
//! contribution of the already solved prefix subtracted from its targets and
//! carries one kernel length of look-ahead, so a signal that is exactly a
//! non-negative combination of kernel copies is recovered exactly.
//!
//! The gram matrix `B^T B` is banded with half-width `kernel.len() - 1`, so the
//! passive-set normal equations are factorised with an envelope Cholesky.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnlsError {
    #[error("active-set solver exceeded {0} iterations")]
    ConvergenceFailure(usize),
    #[error("input contains non-finite values")]
    NonFinite,
}

pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Partial autocorrelations of the kernel: `cum[delta][u] = sum_{m=delta}^{u} k[m] k[m-delta]`.
struct KernelGram {
    len: usize,
    cum: Vec<Vec<f64>>,
}

impl KernelGram {
    fn new(kernel: &[f64]) -> Self {
        let len = kernel.len();
        let cum = (0..len)
            .map(|delta| {
                let mut acc = 0.0;
                let mut row = vec![0.0; len];
                for m in delta..len {
                    acc += kernel[m] * kernel[m - delta];
                    row[m] = acc;
                }
                row
            })
            .collect();
        Self { len, cum }
    }

    /// `(B^T B)_{ij}` for a system with `rows` output samples.
    fn entry(&self, i: usize, j: usize, rows: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let delta = j - i;
        if delta >= self.len || j >= rows {
            return 0.0;
        }
        let upper = (self.len - 1).min(rows - 1 - i);
        if upper < delta {
            0.0
        } else {
            self.cum[delta][upper]
        }
    }
}

/// Envelope (variable band) Cholesky factor of the passive-set gram matrix.
struct EnvelopeCholesky {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeCholesky {
    fn factor(passive: &[usize], gram: &KernelGram, rows: usize) -> Option<Self> {
        let p = passive.len();
        let mut first = Vec::with_capacity(p);
        let mut lo = 0;
        for i in 0..p {
            while passive[i] - passive[lo] >= gram.len {
                lo += 1;
            }
            first.push(lo);
        }
        let mut factor: Vec<Vec<f64>> = Vec::with_capacity(p);
        for i in 0..p {
            let fi = first[i];
            let mut row = vec![0.0; i - fi + 1];
            for j in fi..=i {
                let mut s = gram.entry(passive[i], passive[j], rows);
                if j < i {
                    let fj = first[j];
                    for k in fi.max(fj)..j {
                        s -= row[k - fi] * factor[j][k - fj];
                    }
                } else {
                    for k in fi..i {
                        s -= row[k - fi] * row[k - fi];
                    }
                }
                if j < i {
                    row[j - fi] = s / factor[j][j - first[j]];
                } else {
                    let diag = gram.entry(passive[i], passive[i], rows);
                    if !(s > diag * 1e-14) {
                        return None;
                    }
                    row[i - fi] = s.sqrt();
                }
            }
            factor.push(row);
        }
        Some(Self { first, rows: factor })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let p = rhs.len();
        for i in 0..p {
            let fi = self.first[i];
            let row = &self.rows[i];
            let mut s = rhs[i];
            for k in fi..i {
                s -= row[k - fi] * rhs[k];
            }
            rhs[i] = s / row[i - fi];
        }
        for i in (0..p).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            rhs[i] /= row[i - fi];
            let xi = rhs[i];
            for k in fi..i {
                rhs[k] -= row[k - fi] * xi;
            }
        }
    }
}

/// Lawson-Hanson on one block. `y` is already corrected for earlier blocks.
fn solve_block(
    y: &[f64],
    kernel: &[f64],
    gram: &KernelGram,
    max_iter: usize,
    iterations: &mut usize,
) -> Result<Vec<f64>, NnlsError> {
    let m = y.len();
    let klen = kernel.len();
    let bty: Vec<f64> = (0..m)
        .map(|j| {
            let end = (j + klen).min(m);
            (j..end).map(|r| kernel[r - j] * y[r]).sum()
        })
        .collect();
    let scale = bty.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut d = vec![0.0; m];
    if scale == 0.0 {
        return Ok(d);
    }
    let tol = scale * 1e-11;
    let mut in_passive = vec![false; m];
    let mut excluded = vec![false; m];
    let mut passive: Vec<usize> = Vec::new();
    let mut w = bty.clone();

    loop {
        let candidate = (0..m)
            .filter(|&j| !in_passive[j] && !excluded[j] && w[j] > tol)
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if w[b] >= w[j] => Some(b),
                _ => Some(j),
            });
        let Some(entering) = candidate else { break };
        let pos = passive.partition_point(|&i| i < entering);
        passive.insert(pos, entering);
        in_passive[entering] = true;

        let mut first_pass = true;
        let mut changed = true;
        loop {
            *iterations += 1;
            if *iterations > max_iter {
                return Err(NnlsError::ConvergenceFailure(max_iter));
            }
            let Some(chol) = EnvelopeCholesky::factor(&passive, gram, m) else {
                // numerically dependent column
                if let Ok(pos) = passive.binary_search(&entering) {
                    passive.remove(pos);
                    in_passive[entering] = false;
                }
                excluded[entering] = true;
                changed = !first_pass;
                break;
            };
            let mut z: Vec<f64> = passive.iter().map(|&i| bty[i]).collect();
            chol.solve(&mut z);
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in passive.iter().zip(&z) {
                    d[i] = v;
                }
                break;
            }
            if first_pass {
                let pos = passive.binary_search(&entering).expect("entering index is passive");
                if z[pos] <= 0.0 && d[entering] == 0.0 {
                    // the entering variable cannot move off its bound
                    passive.remove(pos);
                    in_passive[entering] = false;
                    excluded[entering] = true;
                    changed = false;
                    break;
                }
            }
            first_pass = false;
            let mut alpha = f64::INFINITY;
            for (&i, &zi) in passive.iter().zip(&z) {
                if zi <= 0.0 {
                    let a = d[i] / (d[i] - zi);
                    if a < alpha {
                        alpha = a;
                    }
                }
            }
            for (&i, &zi) in passive.iter().zip(&z) {
                d[i] += alpha * (zi - d[i]);
            }
            passive.retain(|&i| {
                let keep = d[i] > 0.0 && d[i] > scale * 1e-15;
                if !keep {
                    d[i] = 0.0;
                    in_passive[i] = false;
                }
                keep
            });
        }

        if !changed {
            continue;
        }
        // w = B^T y - G d, only touching the band around the support
        w.copy_from_slice(&bty);
        for &i in &passive {
            let lo = i.saturating_sub(klen - 1);
            let hi = (i + klen).min(m);
            for j in lo..hi {
                w[j] -= gram.entry(i, j, m) * d[i];
            }
        }
        // exclusions only hold for the solution they were found on
        excluded.iter_mut().for_each(|e| *e = false);
    }
    Ok(d)
}

/// Causal convolution `(B d)_r = sum_{j <= r} kernel[r - j] d_j`, truncated to `d.len()` samples.
pub fn convolve_causal(d: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut out = vec![0.0; n];
    for (j, &dj) in d.iter().enumerate() {
        if dj == 0.0 {
            continue;
        }
        let end = (j + kernel.len()).min(n);
        for r in j..end {
            out[r] += kernel[r - j] * dj;
        }
    }
    out
}

/// Non-negative deconvolution of `y` by `kernel`.
pub fn nnls_deconvolve(y: &[f64], kernel: &[f64], max_iter: usize) -> Result<Vec<f64>, NnlsError> {
    if y.iter().chain(kernel).any(|v| !v.is_finite()) {
        return Err(NnlsError::NonFinite);
    }
    let n = y.len();
    let klen = kernel.len().max(1);
    let gram = KernelGram::new(kernel);
    let block = (4 * klen).max(512);
    let mut d = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let keep_end = (start + block).min(n);
        let solve_end = (keep_end + klen).min(n);
        // subtract the influence of the solved prefix
        let mut target = y[start..solve_end].to_vec();
        let first_src = start.saturating_sub(klen - 1);
        for j in first_src..start {
            if d[j] == 0.0 {
                continue;
            }
            let end = (j + klen).min(solve_end);
            for r in start.max(j)..end {
                target[r - start] -= kernel[r - j] * d[j];
            }
        }
        // every block gets its own iteration budget
        let mut iterations = 0;
        let sub = solve_block(&target, kernel, &gram, max_iter, &mut iterations)?;
        d[start..keep_end].copy_from_slice(&sub[..keep_end - start]);
        start = keep_end;
    }
    Ok(d)
}

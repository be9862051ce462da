//! Skin conductance decomposition into tonic and phasic parts.
//!
//! The raw signal is mean-pooled to a low rate, Gaussian smoothed, and a
//! percentile baseline is taken as the tonic level. The remainder is
//! deconvolved by a Bateman impulse response under a non-negativity
//! constraint; the phasic component is the reconstruction `B d`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnls::{self, NnlsError};
use crate::signal::Window;

#[derive(Debug, Error, PartialEq)]
pub enum EdaError {
    #[error("time constants must satisfy 0 < tau_rise < tau_decay (got {tau_rise}, {tau_decay})")]
    InvalidTau { tau_rise: f64, tau_decay: f64 },
    #[error("sampling rate must be positive")]
    InvalidRate,
    #[error("series of {len} samples is shorter than the kernel ({kernel})")]
    SeriesTooShort { len: usize, kernel: usize },
    #[error("deconvolution failed: {0}")]
    ConvergenceFailure(#[from] NnlsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdaConfig {
    pub tau_rise: f64,
    pub tau_decay: f64,
    pub downsample_hz: f64,
    pub tonic_grid_s: f64,
    pub smooth_sigma_s: f64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            tau_rise: 0.75,
            tau_decay: 2.0,
            downsample_hz: 16.0,
            tonic_grid_s: 10.0,
            smooth_sigma_s: 0.2,
        }
    }
}

/// Sampled `exp(-t/tau_decay) - exp(-t/tau_rise)`, scaled to unit peak.
#[derive(Debug, Clone, PartialEq)]
pub struct BatemanKernel {
    pub tau_rise: f64,
    pub tau_decay: f64,
    pub rate: f64,
    pub values: Vec<f64>,
}

impl BatemanKernel {
    /// Unnormalised continuous response.
    pub fn raw(tau_rise: f64, tau_decay: f64, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            (-t / tau_decay).exp() - (-t / tau_rise).exp()
        }
    }

    /// Time of the continuous maximum.
    pub fn peak_time(&self) -> f64 {
        let (r, d) = (self.tau_rise, self.tau_decay);
        (d / r).ln() * r * d / (d - r)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn bateman_kernel(tau_rise: f64, tau_decay: f64, rate: f64) -> Result<BatemanKernel, EdaError> {
    if !(tau_rise > 0.0 && tau_decay > tau_rise && tau_decay.is_finite()) {
        return Err(EdaError::InvalidTau { tau_rise, tau_decay });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(EdaError::InvalidRate);
    }
    let n = (5.0 * tau_decay * rate).ceil() as usize + 1;
    let mut values: Vec<f64> = (0..n)
        .map(|i| BatemanKernel::raw(tau_rise, tau_decay, i as f64 / rate))
        .collect();
    let peak = values.iter().copied().fold(f64::MIN, f64::max);
    for v in &mut values {
        *v /= peak;
    }
    // the argmax divides by itself; pin it so the peak is exactly one
    if let Some(i) = values.iter().position(|&v| v >= 1.0) {
        values[i] = 1.0;
    }
    values[0] = 0.0;
    Ok(BatemanKernel { tau_rise, tau_decay, rate, values })
}

/// Mean-pool samples into bins of `1/target_hz` seconds starting at the first
/// timestamp. Empty bins repeat the previous bin. Returns bin start times.
pub fn downsample_mean(times: &[f64], values: &[f64], target_hz: f64) -> (Vec<f64>, Vec<f64>) {
    let Some(&t0) = times.first() else {
        return (Vec::new(), Vec::new());
    };
    let last = times[times.len() - 1];
    let bins = ((last - t0) * target_hz).floor() as usize + 1;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for (&t, &v) in times.iter().zip(values) {
        let b = (((t - t0) * target_hz).floor() as usize).min(bins - 1);
        sums[b] += v;
        counts[b] += 1;
    }
    let mut out = Vec::with_capacity(bins);
    let mut prev = values[0];
    for (s, c) in sums.iter().zip(&counts) {
        if *c > 0 {
            prev = s / *c as f64;
        }
        out.push(prev);
    }
    let out_times = (0..bins).map(|k| t0 + k as f64 / target_hz).collect();
    (out_times, out)
}

/// Gaussian smoothing with edge renormalisation.
pub fn gaussian_smooth(values: &[f64], rate: f64, sigma_s: f64) -> Vec<f64> {
    let sigma = sigma_s * rate;
    if sigma <= 0.0 || values.is_empty() {
        return values.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (ti, k) in (-radius..=radius).enumerate() {
                let j = i + k;
                if (0..n).contains(&j) {
                    acc += taps[ti] * values[j as usize];
                    norm += taps[ti];
                }
            }
            acc / norm
        })
        .collect()
}

/// Percentile baseline: around every grid node a window of two grid spacings
/// is searched for its 10th-percentile sample, which becomes an anchor at its
/// own time. The tonic level interpolates the anchors linearly, extends the
/// outer segments to the ends, and never exceeds the signal.
pub fn estimate_tonic(sc: &[f64], rate: f64, grid_spacing_s: f64) -> Vec<f64> {
    let n = sc.len();
    if n == 0 {
        return Vec::new();
    }
    let grid = (grid_spacing_s * rate).round().max(1.0) as usize;
    let mut anchors: Vec<(usize, f64)> = Vec::new();
    let mut center: usize = 0;
    loop {
        let lo = center.saturating_sub(grid);
        let hi = (center + grid + 1).min(n);
        let mut window: Vec<(f64, usize)> = (lo..hi).map(|i| (sc[i], i)).collect();
        window.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let pick = window[((window.len() - 1) as f64 * 0.1).floor() as usize];
        anchors.push((pick.1, pick.0));
        if center + 1 >= n {
            break;
        }
        center = (center + grid).min(n - 1);
    }
    anchors.sort_by_key(|a| a.0);
    anchors.dedup_by_key(|a| a.0);

    let interpolate = |a: (usize, f64), b: (usize, f64), i: usize| -> f64 {
        a.1 + (b.1 - a.1) * (i as f64 - a.0 as f64) / (b.0 as f64 - a.0 as f64)
    };
    let last = anchors.len() - 1;
    let mut tonic = Vec::with_capacity(n);
    let mut seg = 0;
    for (i, &v) in sc.iter().enumerate() {
        // linear extrapolation past the outer anchors, flat with a single anchor
        let level = if last == 0 {
            anchors[0].1
        } else if i <= anchors[0].0 {
            interpolate(anchors[0], anchors[1], i)
        } else if i >= anchors[last].0 {
            interpolate(anchors[last - 1], anchors[last], i)
        } else {
            while anchors[seg + 1].0 <= i {
                seg += 1;
            }
            interpolate(anchors[seg], anchors[seg + 1], i)
        };
        tonic.push(level.min(v));
    }
    tonic
}

/// Result of deconvolving a phasic-only series.
#[derive(Debug, Clone, PartialEq)]
pub struct Deconvolution {
    /// Non-negative driver, in signal units per sample.
    pub driver: Vec<f64>,
    /// `B d`, the phasic reconstruction.
    pub phasic: Vec<f64>,
    pub residual_rmse: f64,
}

pub fn deconvolve_driver(phasic_raw: &[f64], kernel: &BatemanKernel) -> Result<Deconvolution, EdaError> {
    if phasic_raw.len() < kernel.len() {
        return Err(EdaError::SeriesTooShort { len: phasic_raw.len(), kernel: kernel.len() });
    }
    let driver = nnls::nnls_deconvolve(phasic_raw, &kernel.values, nnls::DEFAULT_MAX_ITER)?;
    let phasic = nnls::convolve_causal(&driver, &kernel.values);
    let residual_rmse = rmse(phasic_raw, &phasic);
    Ok(Deconvolution { driver, phasic, residual_rmse })
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Full decomposition of one skin-conductance recording, on the pooled time base.
#[derive(Debug, Clone, PartialEq)]
pub struct EdaDecomposition {
    pub times: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub tonic: Vec<f64>,
    pub phasic: Vec<f64>,
    pub driver: Vec<f64>,
    /// RMS of `smoothed - tonic - phasic`.
    pub residual_rmse: f64,
}

pub fn decompose(times: &[f64], sc: &[f64], config: &EdaConfig) -> Result<EdaDecomposition, EdaError> {
    let kernel = bateman_kernel(config.tau_rise, config.tau_decay, config.downsample_hz)?;
    let (times, pooled) = downsample_mean(times, sc, config.downsample_hz);
    let smoothed = gaussian_smooth(&pooled, config.downsample_hz, config.smooth_sigma_s);
    let tonic = estimate_tonic(&smoothed, config.downsample_hz, config.tonic_grid_s);
    let phasic_raw: Vec<f64> = smoothed.iter().zip(&tonic).map(|(s, t)| s - t).collect();
    let Deconvolution { driver, phasic, .. } = deconvolve_driver(&phasic_raw, &kernel)?;
    let fitted: Vec<f64> = tonic.iter().zip(&phasic).map(|(t, p)| t + p).collect();
    let residual_rmse = rmse(&smoothed, &fitted);
    Ok(EdaDecomposition { times, smoothed, tonic, phasic, driver, residual_rmse })
}

/// Minimum channel coverage for a window's GSR features to be reported.
pub const MIN_COVERAGE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsrFeatures {
    pub phasic_mean: Option<f64>,
    pub phasic_max: Option<f64>,
}

pub fn gsr_features(window: &Window, decomposition: &EdaDecomposition) -> GsrFeatures {
    let none = GsrFeatures { phasic_mean: None, phasic_max: None };
    if window.coverage.gsr < MIN_COVERAGE {
        return none;
    }
    let lo = decomposition.times.partition_point(|&t| t < window.start());
    let hi = decomposition.times.partition_point(|&t| t < window.label_time);
    phasic_summary(&decomposition.phasic[lo..hi.max(lo)]).unwrap_or(none)
}

/// Mean and max of a phasic slice; `None` when empty.
pub fn phasic_summary(phasic: &[f64]) -> Option<GsrFeatures> {
    if phasic.is_empty() {
        return None;
    }
    let mean = phasic.iter().sum::<f64>() / phasic.len() as f64;
    let max = phasic.iter().copied().fold(f64::MIN, f64::max);
    Some(GsrFeatures { phasic_mean: Some(mean), phasic_max: Some(max) })
}

//! Beat detection in the photoplethysmogram and inter-beat-interval features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::Window;

#[derive(Debug, Error, PartialEq)]
pub enum CardioError {
    #[error("sampling rate {0} Hz is below the 32 Hz minimum")]
    RateTooLow(f64),
    #[error("recording of {0:.2} s is shorter than 5 s")]
    SignalTooShort(f64),
    #[error("signal has zero inter-quartile range")]
    FlatSignal,
    #[error("at least two beats are needed, got {0}")]
    TooFewBeats(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CardioConfig {
    pub refractory_s: f64,
    pub prominence_frac: f64,
    pub min_intervals: usize,
    pub detrend_segment_s: f64,
}

impl Default for CardioConfig {
    fn default() -> Self {
        Self { refractory_s: 0.33, prominence_frac: 0.3, min_intervals: 3, detrend_segment_s: 10.0 }
    }
}

/// Plausible inter-beat interval range in seconds.
pub const IBI_BAND: (f64, f64) = (0.33, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSeries {
    pub beat_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub onset: f64,
    pub duration: f64,
    /// Duration outside [`IBI_BAND`].
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbiSeries {
    pub intervals: Vec<Interval>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn iqr(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.75) - quantile(&v, 0.25)
}

/// Remove a continuous piecewise-linear trend through the means of
/// consecutive `seg`-sample segments, anchored at the segment mid-times. A
/// trailing segment shorter than half a segment is folded into its neighbour.
fn detrend_segments(times: &[f64], values: &[f64], seg: usize) -> Vec<f64> {
    let n = values.len();
    let mut bounds: Vec<(usize, usize)> = (0..n).step_by(seg).map(|s| (s, (s + seg).min(n))).collect();
    if bounds.len() > 1 {
        let (s, e) = bounds[bounds.len() - 1];
        if e - s < seg / 2 {
            bounds.pop();
            let k = bounds.len() - 1;
            bounds[k].1 = e;
        }
    }
    let knots: Vec<(f64, f64)> = bounds
        .iter()
        .map(|&(s, e)| {
            let len = (e - s) as f64;
            let t = times[s..e].iter().sum::<f64>() / len;
            let v = values[s..e].iter().sum::<f64>() / len;
            (t, v)
        })
        .collect();
    let trend = |t: f64| -> f64 {
        if knots.len() == 1 {
            return knots[0].1;
        }
        let k = knots.partition_point(|&(kt, _)| kt <= t).clamp(1, knots.len() - 1);
        let (t0, v0) = knots[k - 1];
        let (t1, v1) = knots[k];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    };
    times.iter().zip(values).map(|(&t, &v)| v - trend(t)).collect()
}

/// Height of a peak above the higher of the two minima that separate it from
/// taller samples, searching at most `reach` samples each way.
fn prominence(x: &[f64], i: usize, reach: usize) -> f64 {
    let peak = x[i];
    let mut left_min = peak;
    for k in (i.saturating_sub(reach)..i).rev() {
        if x[k] > peak {
            break;
        }
        left_min = left_min.min(x[k]);
    }
    let mut right_min = peak;
    for &v in x.iter().take((i + reach + 1).min(x.len())).skip(i + 1) {
        if v > peak {
            break;
        }
        right_min = right_min.min(v);
    }
    peak - left_min.max(right_min)
}

pub fn detect_beats(
    times: &[f64],
    values: &[f64],
    rate: f64,
    config: &CardioConfig,
) -> Result<BeatSeries, CardioError> {
    if rate < 32.0 {
        return Err(CardioError::RateTooLow(rate));
    }
    let duration = match (times.first(), times.last()) {
        (Some(a), Some(b)) => b - a + 1.0 / rate,
        _ => 0.0,
    };
    if duration < 5.0 {
        return Err(CardioError::SignalTooShort(duration));
    }
    let seg = ((config.detrend_segment_s * rate).round() as usize).max(2);
    let x = detrend_segments(times, values, seg);
    let global_iqr = iqr(&x);
    if global_iqr == 0.0 {
        return Err(CardioError::FlatSignal);
    }
    let seg_iqr: Vec<f64> = x
        .chunks(seg)
        .map(|c| match iqr(c) {
            v if v > 0.0 => v,
            _ => global_iqr,
        })
        .collect();
    let reach = (2.0 * rate).round() as usize;

    let mut candidates: Vec<usize> = (1..x.len().saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .filter(|&i| prominence(&x, i, reach) >= config.prominence_frac * seg_iqr[i / seg])
        .collect();
    // taller peaks claim their refractory neighbourhood first
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        let clear = accepted
            .iter()
            .all(|&j| (times[i] - times[j]).abs() >= config.refractory_s);
        if clear {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();
    Ok(BeatSeries { beat_times: accepted.into_iter().map(|i| times[i]).collect() })
}

pub fn ibi_series(beats: &BeatSeries) -> Result<IbiSeries, CardioError> {
    let b = &beats.beat_times;
    if b.len() < 2 {
        return Err(CardioError::TooFewBeats(b.len()));
    }
    let intervals = b
        .windows(2)
        .map(|w| {
            let duration = w[1] - w[0];
            Interval {
                onset: w[0],
                duration,
                flagged: !(IBI_BAND.0..=IBI_BAND.1).contains(&duration),
            }
        })
        .collect();
    Ok(IbiSeries { intervals })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CardiacFeatures {
    /// Beats per minute of the shortest in-window interval.
    pub hr_max: Option<f64>,
    /// RMSSD of successive in-window intervals, seconds.
    pub hrv: Option<f64>,
    pub ibi_mean: Option<f64>,
}

/// Features over intervals whose onset lies inside the window. Flagged
/// intervals are skipped, and RMSSD only pairs intervals that are adjacent
/// in the full series.
pub fn cardiac_features(window: &Window, ibi: &IbiSeries, min_intervals: usize) -> CardiacFeatures {
    let inside: Vec<(usize, f64)> = ibi
        .intervals
        .iter()
        .enumerate()
        .filter(|(_, iv)| !iv.flagged && window.contains(iv.onset))
        .map(|(k, iv)| (k, iv.duration))
        .collect();
    interval_features(&inside, min_intervals)
}

/// Features from `(series index, duration)` pairs.
pub fn interval_features(inside: &[(usize, f64)], min_intervals: usize) -> CardiacFeatures {
    if inside.len() < min_intervals.max(1) {
        return CardiacFeatures::default();
    }
    let hr_max = inside.iter().map(|&(_, d)| 60.0 / d).fold(f64::MIN, f64::max);
    let ibi_mean = inside.iter().map(|&(_, d)| d).sum::<f64>() / inside.len() as f64;
    let diffs: Vec<f64> = inside
        .windows(2)
        .filter(|w| w[1].0 == w[0].0 + 1)
        .map(|w| w[1].1 - w[0].1)
        .collect();
    let hrv = (!diffs.is_empty())
        .then(|| (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt());
    CardiacFeatures { hr_max: Some(hr_max), hrv, ibi_mean: Some(ibi_mean) }
}

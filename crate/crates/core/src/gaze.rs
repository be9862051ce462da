//! Dispersion-threshold fixation detection and per-screen gaze features.

use serde::{Deserialize, Serialize};

use crate::signal::{GazePoint, Screen, Window};

/// Slack on the duration comparison so that `k` samples at rate `r` count as
/// exactly `k / r` seconds.
const DURATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationAggregate {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GazeConfig {
    pub dispersion_threshold: f64,
    pub min_duration_s: f64,
    pub duration_aggregate: DurationAggregate,
}

impl Default for GazeConfig {
    fn default() -> Self {
        Self {
            dispersion_threshold: 0.05,
            min_duration_s: 0.2,
            duration_aggregate: DurationAggregate::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub start: f64,
    /// Last member timestamp plus one sample period.
    pub end: f64,
    pub x: f64,
    pub y: f64,
    /// `(max x - min x) + (max y - min y)` over the member samples.
    pub dispersion: f64,
    pub screen: Screen,
    /// Index of the first member sample and number of members.
    pub first_sample: usize,
    pub samples: usize,
}

impl Fixation {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

#[derive(Clone, Copy)]
struct Bounds {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Bounds {
    fn new(p: &GazePoint) -> Self {
        Self { min_x: p.x, max_x: p.x, min_y: p.y, max_y: p.y }
    }

    fn with(self, p: &GazePoint) -> Self {
        Self {
            min_x: self.min_x.min(p.x),
            max_x: self.max_x.max(p.x),
            min_y: self.min_y.min(p.y),
            max_y: self.max_y.max(p.y),
        }
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Greedy left-to-right I-DT. From each start sample the group grows while
/// the screen stays the same and the dispersion stays within the threshold.
/// A long enough group is emitted and the scan resumes after it; otherwise
/// the scan moves one sample on.
pub fn detect_fixations(
    times: &[f64],
    points: &[GazePoint],
    sample_period: f64,
    dispersion_threshold: f64,
    min_duration: f64,
) -> Vec<Fixation> {
    assert_eq!(times.len(), points.len());
    let n = points.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut bounds = Bounds::new(&points[i]);
        let mut j = i;
        while j + 1 < n && points[j + 1].screen == points[i].screen {
            let grown = bounds.with(&points[j + 1]);
            if grown.dispersion() > dispersion_threshold {
                break;
            }
            bounds = grown;
            j += 1;
        }
        let start = times[i];
        let end = times[j] + sample_period;
        if end - start >= min_duration - DURATION_EPS {
            let members = &points[i..=j];
            let k = members.len() as f64;
            out.push(Fixation {
                start,
                end,
                x: members.iter().map(|p| p.x).sum::<f64>() / k,
                y: members.iter().map(|p| p.y).sum::<f64>() / k,
                dispersion: bounds.dispersion(),
                screen: points[i].screen,
                first_sample: i,
                samples: members.len(),
            });
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AoiFeatures {
    pub fix_count: f64,
    pub fix_dur: Option<f64>,
    pub fix_disp: Option<f64>,
}

/// Features indexed by [`Screen::index`].
pub type GazeFeatures = [AoiFeatures; 4];

/// A fixation belongs to the window when its midpoint does.
pub fn gaze_features(window: &Window, fixations: &[Fixation], aggregate: DurationAggregate) -> GazeFeatures {
    let mut count = [0usize; 4];
    let mut dur = [0.0f64; 4];
    let mut disp = [0.0f64; 4];
    for f in fixations.iter().filter(|f| window.contains(f.midpoint())) {
        let k = f.screen.index();
        count[k] += 1;
        dur[k] += f.duration();
        disp[k] += f.dispersion;
    }
    let mut out = GazeFeatures::default();
    for k in 0..4 {
        let c = count[k] as f64;
        out[k] = AoiFeatures {
            fix_count: c,
            fix_dur: (count[k] > 0).then(|| match aggregate {
                DurationAggregate::Mean => dur[k] / c,
                DurationAggregate::Sum => dur[k],
            }),
            fix_disp: (count[k] > 0).then(|| disp[k] / c),
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Coverage;

    const RATE: f64 = 15.0;

    fn pt(x: f64, y: f64, screen: Screen) -> GazePoint {
        GazePoint { x, y, screen }
    }

    fn times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / RATE).collect()
    }

    fn window(label_time: f64) -> Window {
        let c = Coverage { gsr: 1.0, ppg: 1.0, gaze: 1.0 };
        Window { index: 0, label_time, rating: 5, width: 25.0, gsr: 0..0, ppg: 0..0, gaze: 0..0, coverage: c }
    }

    fn fixation(start: f64, end: f64, screen: Screen, dispersion: f64) -> Fixation {
        Fixation { start, end, x: 0.5, y: 0.5, dispersion, screen, first_sample: 0, samples: 3 }
    }

    #[test]
    fn single_point_second() {
        let p = vec![pt(0.3, 0.3, Screen::Center); 15];
        let f = detect_fixations(&times(15), &p, 1.0 / RATE, 0.05, 0.2);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].dispersion, 0.0);
        assert!((f[0].duration() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_clusters() {
        let mut p = vec![pt(0.2, 0.5, Screen::Center); 8];
        p.extend(vec![pt(0.7, 0.5, Screen::Center); 8]);
        let f = detect_fixations(&times(16), &p, 1.0 / RATE, 0.05, 0.2);
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].samples, f[1].samples), (8, 8));
    }

    #[test]
    fn screen_change_breaks_group() {
        let mut p = vec![pt(0.5, 0.5, Screen::Left); 5];
        p.extend(vec![pt(0.5, 0.5, Screen::Right); 5]);
        let f = detect_fixations(&times(10), &p, 1.0 / RATE, 0.05, 0.2);
        assert_eq!(f.iter().map(|f| f.screen).collect::<Vec<_>>(), vec![Screen::Left, Screen::Right]);
    }

    #[test]
    fn three_samples_meet_min_duration() {
        let p = vec![pt(0.5, 0.5, Screen::Ndrt); 3];
        assert_eq!(detect_fixations(&times(3), &p, 1.0 / RATE, 0.05, 0.2).len(), 1);
        assert!(detect_fixations(&times(2), &p[..2], 1.0 / RATE, 0.05, 0.2).is_empty());
    }

    #[test]
    fn empty_window() {
        let g = gaze_features(&window(50.0), &[], DurationAggregate::Mean);
        for a in g {
            assert_eq!(a.fix_count, 0.0);
            assert_eq!((a.fix_dur, a.fix_disp), (None, None));
        }
    }

    #[test]
    fn one_center_fixation() {
        let f = [fixation(30.0, 30.6, Screen::Center, 0.02)];
        let g = gaze_features(&window(50.0), &f, DurationAggregate::Mean);
        let c = g[Screen::Center.index()];
        assert_eq!(c.fix_count, 1.0);
        assert!((c.fix_dur.unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(c.fix_disp, Some(0.02));
        for s in [Screen::Left, Screen::Right, Screen::Ndrt] {
            assert_eq!(g[s.index()].fix_count, 0.0);
        }
    }

    #[test]
    fn straddling_fixation_counted_once() {
        // window [25, 50) and [50, 75); midpoint 24.9 + 0.3 = 25.2
        let f = [fixation(24.9, 25.5, Screen::Left, 0.01)];
        let a = gaze_features(&window(50.0), &f, DurationAggregate::Mean);
        let b = gaze_features(&window(25.0), &f, DurationAggregate::Mean);
        assert_eq!(a[Screen::Left.index()].fix_count, 1.0);
        assert_eq!(b[Screen::Left.index()].fix_count, 0.0);
    }

    #[test]
    fn sum_aggregate() {
        let f = [fixation(30.0, 30.5, Screen::Right, 0.01), fixation(31.0, 31.25, Screen::Right, 0.03)];
        let g = gaze_features(&window(50.0), &f, DurationAggregate::Sum);
        assert_eq!(g[Screen::Right.index()].fix_dur, Some(0.75));
        assert!((g[Screen::Right.index()].fix_disp.unwrap() - 0.02).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn trace() -> impl Strategy<Value = Vec<GazePoint>> {
            proptest::collection::vec(
                (0.0f64..1.0, 0.0f64..1.0, 0usize..4, 0usize..6),
                1..40,
            )
            .prop_map(|segments| {
                // piecewise constant dwell positions with small jitter
                let mut out = Vec::new();
                for (k, (x, y, s, len)) in segments.into_iter().enumerate() {
                    for m in 0..len {
                        let j = 0.004 * ((k * 7 + m * 3) % 5) as f64;
                        out.push(pt(x + j, y - j, Screen::ALL[s]));
                    }
                }
                out
            })
        }

        proptest! {
            #[test]
            fn fixations_respect_thresholds(p in trace()) {
                let t = times(p.len());
                let f = detect_fixations(&t, &p, 1.0 / RATE, 0.05, 0.2);
                for w in f.windows(2) {
                    prop_assert!(w[0].end <= w[1].start + 1e-12);
                    prop_assert!(w[0].start < w[1].start);
                }
                for fx in &f {
                    prop_assert!(fx.duration() >= 0.2 - 1e-9);
                    prop_assert!(fx.dispersion <= 0.05);
                    let members = &p[fx.first_sample..fx.first_sample + fx.samples];
                    prop_assert!(members.iter().all(|m| m.screen == fx.screen));
                }
            }
        }
    }
}

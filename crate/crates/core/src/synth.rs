//! Synthetic cohorts: latent trust trajectories driven by takeover events,
//! and physiological channels whose statistics move linearly with trust.
//!
//! Each link strength is signed and expressed per unit of trust, relative to
//! the mid-scale reference [`TRUST_REF`]. A positive link makes the feature
//! grow with trust.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError};
use crate::eda::BatemanKernel;
use crate::models::derive_seed;
use crate::par;
use crate::signal::{assemble_session, Condition, Drive, GazePoint, RawStreams, Screen, Session, SessionMeta};

pub const TRUST_REF: f64 = 6.5;
pub const GROUND_TRUTH: &str = "ground_truth.json";

// Per unit of link strength and of trust: acceleration depth and beat-to-beat
// spread, seconds.
const HR_GAIN: f64 = 0.08;
const HRV_GAIN: f64 = 0.025;
// Skin conductance responses per second at the reference trust, and per unit
// of link strength and trust.
const SCR_BASE: f64 = 0.15;
const SCR_GAIN: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustDynamics {
    pub start: f64,
    pub miss_drop: f64,
    pub recovery_half_life_s: f64,
    pub fa_drop: f64,
    pub true_alarm_gain: f64,
}

impl Default for TrustDynamics {
    fn default() -> Self {
        Self { start: 8.0, miss_drop: 3.0, recovery_half_life_s: 100.0, fa_drop: 0.5, true_alarm_gain: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkStrengths {
    pub fix_count_center: f64,
    pub fix_count_ndrt: f64,
    pub hr_max: f64,
    pub hrv: f64,
    pub gsr_phasic_mean: f64,
}

impl Default for LinkStrengths {
    fn default() -> Self {
        Self { fix_count_center: -1.0, fix_count_ndrt: 0.3, hr_max: 0.6, hrv: -0.3, gsr_phasic_mean: 0.8 }
    }
}

impl LinkStrengths {
    pub fn zero() -> Self {
        Self { fix_count_center: 0.0, fix_count_ndrt: 0.0, hr_max: 0.0, hrv: 0.0, gsr_phasic_mean: 0.0 }
    }

    /// `(feature name, strength)` by descending absolute strength.
    pub fn ranked(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("fix_count_center", self.fix_count_center),
            ("fix_count_ndrt", self.fix_count_ndrt),
            ("hr_max", self.hr_max),
            ("hrv", self.hrv),
            ("gsr_phasic_mean", self.gsr_phasic_mean),
        ];
        v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseLevels {
    /// White noise on the pulse waveform (pulse height 1).
    pub ppg: f64,
    /// White noise on skin conductance, microsiemens.
    pub gsr: f64,
    /// Per-sample gaze jitter, screen units.
    pub gaze: f64,
    /// Largest integer offset added to a rating.
    pub label: u8,
    /// Scale of the per-participant baseline offsets.
    pub participant: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self { ppg: 0.02, gsr: 0.005, gaze: 0.003, label: 1, participant: 1.0 }
    }
}

impl NoiseLevels {
    pub fn zero() -> Self {
        Self { ppg: 0.0, gsr: 0.0, gaze: 0.0, label: 0, participant: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub gsr: f64,
    pub ppg: f64,
    pub gaze: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { gsr: 32.0, ppg: 128.0, gaze: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub participants_per_condition: usize,
    pub drive_s: f64,
    pub label_interval_s: f64,
    /// Takeover request times; empty means eight evenly spaced events.
    pub tor_times: Vec<f64>,
    /// 1-based positions of the faulty takeover events.
    pub fault_events: Vec<usize>,
    pub trust: TrustDynamics,
    pub links: LinkStrengths,
    pub noise: NoiseLevels,
    pub rates: Rates,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            participants_per_condition: 20,
            drive_s: 900.0,
            label_interval_s: 25.0,
            tor_times: Vec::new(),
            fault_events: vec![2, 3, 5, 6],
            trust: TrustDynamics::default(),
            links: LinkStrengths::default(),
            noise: NoiseLevels::default(),
            rates: Rates::default(),
            seed: 0,
        }
    }
}

pub const N_EVENTS: usize = 8;

impl CohortConfig {
    pub fn events(&self) -> Vec<f64> {
        if self.tor_times.is_empty() {
            (0..N_EVENTS).map(|k| self.drive_s * (k as f64 + 0.5) / N_EVENTS as f64).collect()
        } else {
            self.tor_times.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.into()));
        if self.participants_per_condition == 0 {
            return bad("participants_per_condition must be at least 1");
        }
        if !(self.label_interval_s > 0.0 && self.drive_s >= self.label_interval_s && self.drive_s.is_finite()) {
            return bad("drive_s must cover at least one label interval");
        }
        let events = self.events();
        if events.len() != N_EVENTS {
            return bad("the takeover schedule has exactly 8 events");
        }
        if events.windows(2).any(|w| !(w[0] < w[1])) || events.iter().any(|t| !(0.0..=self.drive_s).contains(t)) {
            return bad("takeover times must increase and lie inside the drive");
        }
        if self.fault_events.iter().any(|&k| !(1..=N_EVENTS).contains(&k)) {
            return bad("fault_events are 1-based positions in 1..=8");
        }
        let r = &self.rates;
        if !(r.gsr > 0.0 && r.ppg > 0.0 && r.gaze > 0.0) {
            return bad("rates must be positive");
        }
        let t = &self.trust;
        if !(t.recovery_half_life_s > 0.0) || !(0.0..=10.0).contains(&t.start) {
            return bad("trust start must lie in 0..=10 and the half-life be positive");
        }
        let n = &self.noise;
        if [n.ppg, n.gsr, n.gaze, n.participant].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TrueAlarm,
    FalseAlarm,
    Miss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

pub fn event_schedule(cfg: &CohortConfig, condition: Condition) -> Vec<Event> {
    cfg.events()
        .into_iter()
        .enumerate()
        .map(|(k, time)| {
            let fault = cfg.fault_events.contains(&(k + 1));
            let kind = match (condition, fault) {
                (Condition::Fa, true) => EventKind::FalseAlarm,
                (Condition::Miss, true) => EventKind::Miss,
                _ => EventKind::TrueAlarm,
            };
            Event { time, kind }
        })
        .collect()
}

/// Latent trust at time `t`: misses cut trust and decay back, alarms shift
/// it permanently, and the sum is clipped to the rating scale.
pub fn latent_trust(d: &TrustDynamics, events: &[Event], t: f64) -> f64 {
    let mut v = d.start;
    for e in events.iter().filter(|e| e.time <= t) {
        v += match e.kind {
            EventKind::Miss => -d.miss_drop * 0.5f64.powf((t - e.time) / d.recovery_half_life_s),
            EventKind::FalseAlarm => -d.fa_drop,
            EventKind::TrueAlarm => d.true_alarm_gain,
        };
    }
    v.clamp(0.0, 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustSample {
    pub t: f64,
    pub trust: f64,
    pub rating: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrPulse {
    pub t: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub start: f64,
    pub end: f64,
    pub screen: Screen,
    pub x: f64,
    pub y: f64,
}

/// Everything the generator decided, for oracle comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub participant_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub events: Vec<Event>,
    pub trajectory: Vec<TrustSample>,
    pub beat_times: Vec<f64>,
    pub scr_pulses: Vec<ScrPulse>,
    pub dwells: Vec<Dwell>,
    pub links: LinkStrengths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSession {
    pub session: Session,
    pub truth: GroundTruth,
}

fn sample_times(duration: f64, rate: f64) -> impl Iterator<Item = f64> {
    let n = (duration * rate).floor() as usize;
    (0..n).map(move |i| i as f64 / rate)
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

/// Gaussian pulses (width 0.1 s, height 1) at the beat times on a slow
/// respiratory baseline, plus white noise.
pub fn generate_ppg(beats: &[f64], duration: f64, rate: f64, noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 0.1;
    let reach = 6.0 * width;
    let noise = normal(noise);
    let mut first = 0;
    sample_times(duration, rate)
        .map(|t| {
            while first < beats.len() && beats[first] < t - reach {
                first += 1;
            }
            let pulses: f64 = beats[first..]
                .iter()
                .take_while(|&&b| b <= t + reach)
                .map(|b| (-0.5 * ((t - b) / width).powi(2)).exp())
                .sum();
            let breathing = 0.15 * (2.0 * std::f64::consts::PI * 0.25 * t).sin();
            (t, pulses + breathing + noise.sample(&mut rng))
        })
        .collect()
}

/// Tonic level plus unit-peak Bateman responses (0.75 s / 2 s) scaled by the
/// pulse amplitudes, plus white noise.
pub fn generate_gsr(
    pulses: &[ScrPulse],
    tonic: impl Fn(f64) -> f64,
    duration: f64,
    rate: f64,
    noise: f64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let (tr, td) = (0.75f64, 2.0f64);
    let peak_t = (td / tr).ln() * tr * td / (td - tr);
    let peak = BatemanKernel::raw(tr, td, peak_t);
    let reach = 12.0 * td;
    let noise = normal(noise);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = 0;
    sample_times(duration, rate)
        .map(|t| {
            while first < pulses.len() && pulses[first].t < t - reach {
                first += 1;
            }
            let phasic: f64 = pulses[first..]
                .iter()
                .take_while(|p| p.t <= t)
                .map(|p| p.amplitude * BatemanKernel::raw(tr, td, t - p.t) / peak)
                .sum();
            (t, tonic(t) + phasic + noise.sample(&mut rng))
        })
        .collect()
}

/// Samples every dwell at the gaze rate with Gaussian jitter.
pub fn generate_gaze(dwells: &[Dwell], duration: f64, rate: f64, jitter: f64, seed: u64) -> Vec<(f64, GazePoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(jitter);
    let mut k = 0;
    sample_times(duration, rate)
        .map(|t| {
            while k + 1 < dwells.len() && dwells[k].end <= t {
                k += 1;
            }
            let d = dwells[k];
            let p = GazePoint {
                x: (d.x + noise.sample(&mut rng)).clamp(0.0, 1.0),
                y: (d.y + noise.sample(&mut rng)).clamp(0.0, 1.0),
                screen: d.screen,
            };
            (t, p)
        })
        .collect()
}

/// Per-participant baseline shifts, scaled by the participant noise level.
struct Baseline {
    ibi: f64,
    scr_rate: f64,
    tonic: f64,
    center: f64,
}

struct Participant<'a> {
    cfg: &'a CohortConfig,
    events: Vec<Event>,
}

impl Participant<'_> {
    fn trust(&self, t: f64) -> f64 {
        latent_trust(&self.cfg.trust, &self.events, t)
    }

    /// Heart rate couples to trust through brief accelerations every 8 s,
    /// so the peak rate moves more than the mean interval.
    fn beats(&self, base: &Baseline, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let l = &self.cfg.links;
        let (period, width) = (8.0, 0.8);
        let phase = rng.random_range(0.0..period);
        let mut t = rng.random_range(0.1..0.6);
        let mut out = Vec::new();
        while t < self.cfg.drive_s {
            out.push(t);
            let dt = self.trust(t) - TRUST_REF;
            let depth = (0.1 + HR_GAIN * l.hr_max * dt).max(0.0);
            let offset = (t - phase).rem_euclid(period);
            let from_peak = offset.min(period - offset);
            let accel = depth * (-0.5 * (from_peak / width).powi(2)).exp();
            let sd = (0.04 + HRV_GAIN * l.hrv * dt).max(0.004);
            let ibi: f64 = 0.85 + base.ibi - accel + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            t += ibi.clamp(0.45, 1.4);
        }
        out
    }

    fn scr_pulses(&self, base: &Baseline, rng: &mut ChaCha8Rng) -> Vec<ScrPulse> {
        let step = 0.25;
        let mut out = Vec::new();
        let mut t = 0.0;
        while t < self.cfg.drive_s {
            let dt = self.trust(t) - TRUST_REF;
            let rate = (SCR_BASE + base.scr_rate + SCR_GAIN * self.cfg.links.gsr_phasic_mean * dt).max(0.005);
            if rng.random_bool((rate * step).min(1.0)) {
                out.push(ScrPulse { t: t + rng.random_range(0.0..step), amplitude: rng.random_range(0.1..0.4) });
            }
            t += step;
        }
        out
    }

    fn dwells(&self, base: &Baseline, rng: &mut ChaCha8Rng) -> Vec<Dwell> {
        let l = &self.cfg.links;
        let mut out = Vec::new();
        let mut t = 0.0;
        while t < self.cfg.drive_s {
            let dt = self.trust(t) - TRUST_REF;
            let p_center = (0.3 + base.center + 0.04 * l.fix_count_center * dt).clamp(0.05, 0.85);
            let p_ndrt = (0.35 + 0.04 * l.fix_count_ndrt * dt).clamp(0.05, 0.9 - p_center);
            let u: f64 = rng.random();
            let screen = if u < p_center {
                Screen::Center
            } else if u < p_center + p_ndrt {
                Screen::Ndrt
            } else if rng.random_bool(0.5) {
                Screen::Left
            } else {
                Screen::Right
            };
            let length = match screen {
                Screen::Ndrt => rng.random_range(0.5..1.2),
                _ => rng.random_range(0.25..0.6),
            };
            out.push(Dwell {
                start: t,
                end: t + length,
                screen,
                x: rng.random_range(0.1..0.9),
                y: rng.random_range(0.1..0.9),
            });
            t += length;
        }
        out
    }
}

pub fn generate_participant(
    cfg: &CohortConfig,
    participant_id: &str,
    condition: Condition,
    seed: u64,
) -> Result<SyntheticSession, SynthError> {
    cfg.validate()?;
    let p = Participant { cfg, events: event_schedule(cfg, condition) };
    let stream = |k: u64| ChaCha8Rng::seed_from_u64(derive_seed(seed, k));

    let mut rng = stream(0);
    let s = cfg.noise.participant;
    let base = Baseline {
        ibi: s * 0.03 * rng.sample::<f64, _>(rand_distr::StandardNormal),
        scr_rate: s * 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal),
        tonic: s * 1.5 * rng.random::<f64>(),
        center: s * 0.02 * rng.sample::<f64, _>(rand_distr::StandardNormal),
    };

    let beat_times = p.beats(&base, &mut stream(1));
    let scr_pulses = p.scr_pulses(&base, &mut stream(2));
    let dwells = p.dwells(&base, &mut stream(3));

    let mut label_rng = stream(4);
    let noise = i64::from(cfg.noise.label);
    let n_labels = (cfg.drive_s / cfg.label_interval_s).floor() as usize;
    let trajectory: Vec<TrustSample> = (1..=n_labels)
        .map(|k| {
            let t = k as f64 * cfg.label_interval_s;
            let trust = p.trust(t);
            let jitter = if noise > 0 { label_rng.random_range(-noise..=noise) } else { 0 };
            let rating = (trust.round() as i64 + jitter).clamp(0, 10) as u8;
            TrustSample { t, trust, rating }
        })
        .collect();

    let d = cfg.drive_s;
    let tonic = move |t: f64| 2.0 + base.tonic + 0.0004 * t + 0.1 * (2.0 * std::f64::consts::PI * t / 300.0).sin();
    let raw = RawStreams {
        gsr_rate: cfg.rates.gsr,
        gsr: generate_gsr(&scr_pulses, tonic, d, cfg.rates.gsr, cfg.noise.gsr, derive_seed(seed, 5)),
        ppg_rate: cfg.rates.ppg,
        ppg: generate_ppg(&beat_times, d, cfg.rates.ppg, cfg.noise.ppg, derive_seed(seed, 6)),
        gaze_rate: cfg.rates.gaze,
        gaze: generate_gaze(&dwells, d, cfg.rates.gaze, cfg.noise.gaze, derive_seed(seed, 7)),
        labels: trajectory.iter().map(|s| (s.t, i64::from(s.rating))).collect(),
    };
    let meta = SessionMeta {
        participant_id: participant_id.to_string(),
        condition,
        drive: if seed.is_multiple_of(2) { Drive::Urban } else { Drive::Suburban },
    };
    let session = assemble_session(raw, meta).map_err(DatasetError::from)?;
    Ok(SyntheticSession {
        session,
        truth: GroundTruth {
            participant_id: participant_id.to_string(),
            condition,
            seed,
            events: p.events,
            trajectory,
            beat_times,
            scr_pulses,
            dwells,
            links: cfg.links.clone(),
        },
    })
}

/// Participants in condition order (control, fa, miss), ids `p001`, `p002`, ...
pub fn generate_cohort(cfg: &CohortConfig) -> Result<Vec<SyntheticSession>, SynthError> {
    cfg.validate()?;
    let n = cfg.participants_per_condition;
    par::map(3 * n, |i| {
        let condition = Condition::ALL[i / n];
        generate_participant(cfg, &format!("p{:03}", i + 1), condition, derive_seed(cfg.seed, i as u64))
    })
    .into_iter()
    .collect()
}

/// One directory per participant: the session files plus `ground_truth.json`.
pub fn write_cohort(root: &Path, cohort: &[SyntheticSession]) -> Result<(), SynthError> {
    for s in cohort {
        let dir = root.join(&s.session.meta.participant_id);
        dataset::write_session(&dir, &s.session)?;
        let path = dir.join(GROUND_TRUTH);
        let text = serde_json::to_string(&s.truth)
            .map_err(|source| DatasetError::Json { path: path.clone(), source })?;
        fs::write(&path, text + "\n").map_err(|source| DatasetError::Io { path, source })?;
    }
    Ok(())
}

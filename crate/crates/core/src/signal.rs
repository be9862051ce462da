//! Session time base, stream validation and pre-label window extraction.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default width of the pre-label window in seconds.
pub const DEFAULT_WINDOW_S: f64 = 25.0;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("{channel} stream is empty")]
    EmptyStream { channel: Channel },
    #[error("{channel} timestamps not strictly increasing at index {index}")]
    NonMonotonicTimestamps { channel: Channel, index: usize },
    #[error("{channel} timestamp at index {index} is negative or not finite")]
    InvalidTimestamp { channel: Channel, index: usize },
    #[error("{channel} value at index {index} is not finite")]
    InvalidValue { channel: Channel, index: usize },
    #[error("trust rating {rating} at index {index} outside 0..=10")]
    RatingOutOfRange { index: usize, rating: i64 },
    #[error("nominal rate for {channel} must be positive, got {rate}")]
    InvalidRate { channel: Channel, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Gsr,
    Ppg,
    Gaze,
    Label,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Gsr => "gsr",
            Channel::Ppg => "ppg",
            Channel::Gaze => "gaze",
            Channel::Label => "label",
        })
    }
}

/// Seconds since the session epoch. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Timestamp(f64);

impl Timestamp {
    pub fn new(t: f64) -> Option<Self> {
        (t.is_finite() && t >= 0.0).then_some(Self(t))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Control,
    Fa,
    Miss,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Control, Condition::Fa, Condition::Miss];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Control => "control",
            Condition::Fa => "fa",
            Condition::Miss => "miss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drive {
    Urban,
    Suburban,
}

/// The four display areas gaze can land on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Screen {
    Center,
    Left,
    Right,
    Ndrt,
}

impl Screen {
    pub const ALL: [Screen; 4] = [Screen::Center, Screen::Left, Screen::Right, Screen::Ndrt];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Screen::Center => "center",
            Screen::Left => "left",
            Screen::Right => "right",
            Screen::Ndrt => "ndrt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub x: f64,
    pub y: f64,
    pub screen: Screen,
}

/// A validated channel: strictly increasing timestamps and one payload per
/// timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream<P> {
    channel: Channel,
    nominal_rate: f64,
    times: Vec<f64>,
    values: Vec<P>,
}

impl<P> SampleStream<P> {
    fn validated(
        channel: Channel,
        nominal_rate: f64,
        samples: Vec<(f64, P)>,
    ) -> Result<Self, SignalError> {
        if !(nominal_rate.is_finite() && nominal_rate > 0.0) {
            return Err(SignalError::InvalidRate { channel, rate: nominal_rate });
        }
        if samples.is_empty() {
            return Err(SignalError::EmptyStream { channel });
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut values = Vec::with_capacity(samples.len());
        for (index, (t, v)) in samples.into_iter().enumerate() {
            if Timestamp::new(t).is_none() {
                return Err(SignalError::InvalidTimestamp { channel, index });
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(SignalError::NonMonotonicTimestamps { channel, index });
                }
            }
            times.push(t);
            values.push(v);
        }
        Ok(Self { channel, nominal_rate, times, values })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[P] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index range of samples with `start <= t < end`.
    pub fn range(&self, start: f64, end: f64) -> Range<usize> {
        let lo = self.times.partition_point(|&t| t < start);
        let hi = self.times.partition_point(|&t| t < end);
        lo..hi.max(lo)
    }
}

impl<P: Clone> SampleStream<P> {
    pub fn samples(&self) -> impl Iterator<Item = (f64, P)> + '_ {
        self.times.iter().copied().zip(self.values.iter().cloned())
    }
}

pub type ScalarStream = SampleStream<f64>;
pub type GazeStream = SampleStream<GazePoint>;
pub type LabelStream = SampleStream<u8>;

fn scalar_stream(
    channel: Channel,
    rate: f64,
    samples: Vec<(f64, f64)>,
) -> Result<ScalarStream, SignalError> {
    if let Some(index) = samples.iter().position(|(_, v)| !v.is_finite()) {
        return Err(SignalError::InvalidValue { channel, index });
    }
    SampleStream::validated(channel, rate, samples)
}

/// Unvalidated channel data as read from disk or produced by a generator.
#[derive(Debug, Clone, Default)]
pub struct RawStreams {
    pub gsr_rate: f64,
    pub gsr: Vec<(f64, f64)>,
    pub ppg_rate: f64,
    pub ppg: Vec<(f64, f64)>,
    pub gaze_rate: f64,
    pub gaze: Vec<(f64, GazePoint)>,
    pub labels: Vec<(f64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub participant_id: String,
    pub condition: Condition,
    pub drive: Drive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub meta: SessionMeta,
    pub gsr: ScalarStream,
    pub ppg: ScalarStream,
    pub gaze: GazeStream,
    pub labels: LabelStream,
}

/// Nominal rate of the label channel; ratings are event-like so it only
/// exists to satisfy the stream contract.
const LABEL_RATE: f64 = 1.0 / DEFAULT_WINDOW_S;

/// Validate raw channel data and bind it to one session.
pub fn assemble_session(raw: RawStreams, meta: SessionMeta) -> Result<Session, SignalError> {
    let gsr = scalar_stream(Channel::Gsr, raw.gsr_rate, raw.gsr)?;
    let ppg = scalar_stream(Channel::Ppg, raw.ppg_rate, raw.ppg)?;
    if let Some(index) = raw
        .gaze
        .iter()
        .position(|(_, g)| !(g.x.is_finite() && g.y.is_finite()))
    {
        return Err(SignalError::InvalidValue { channel: Channel::Gaze, index });
    }
    let gaze = SampleStream::validated(Channel::Gaze, raw.gaze_rate, raw.gaze)?;
    let mut labels = Vec::with_capacity(raw.labels.len());
    for (index, (t, rating)) in raw.labels.into_iter().enumerate() {
        if !(0..=10).contains(&rating) {
            return Err(SignalError::RatingOutOfRange { index, rating });
        }
        labels.push((t, rating as u8));
    }
    let labels = SampleStream::validated(Channel::Label, LABEL_RATE, labels)?;
    Ok(Session { meta, gsr, ppg, gaze, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub gsr: f64,
    pub ppg: f64,
    pub gaze: f64,
}

/// A half-open slice `[label_time - width, label_time)` of every physiological
/// channel, bound to one trust rating. Holds index ranges into the session.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    pub label_time: f64,
    pub rating: u8,
    pub width: f64,
    pub gsr: Range<usize>,
    pub ppg: Range<usize>,
    pub gaze: Range<usize>,
    pub coverage: Coverage,
}

impl Window {
    pub fn start(&self) -> f64 {
        self.label_time - self.width
    }

    /// Half-open membership test shared by every feature extractor.
    pub fn contains(&self, t: f64) -> bool {
        self.start() <= t && t < self.label_time
    }
}

fn coverage(observed: usize, width: f64, rate: f64) -> f64 {
    (observed as f64 / (width * rate)).clamp(0.0, 1.0)
}

/// One window per label sample, in label order.
pub fn extract_windows(session: &Session, width: f64) -> Vec<Window> {
    assert!(width > 0.0 && width.is_finite(), "window width must be positive");
    session
        .labels
        .samples()
        .enumerate()
        .map(|(index, (label_time, rating))| {
            let start = label_time - width;
            let gsr = session.gsr.range(start, label_time);
            let ppg = session.ppg.range(start, label_time);
            let gaze = session.gaze.range(start, label_time);
            let coverage = Coverage {
                gsr: coverage(gsr.len(), width, session.gsr.nominal_rate()),
                ppg: coverage(ppg.len(), width, session.ppg.nominal_rate()),
                gaze: coverage(gaze.len(), width, session.gaze.nominal_rate()),
            };
            Window { index, label_time, rating, width, gsr, ppg, gaze, coverage }
        })
        .collect()
}

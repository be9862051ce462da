//! Per-session feature extraction: every channel is processed once over the
//! whole recording and then summarised inside each pre-label window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardio::{self, CardioConfig, CardioError, IbiSeries};
use crate::dataset::{self, FeatureMatrix, FeatureVector, N_FEATURES};
use crate::eda::{self, EdaConfig, EdaDecomposition, EdaError, MIN_COVERAGE};
use crate::gaze::{self, GazeConfig};
use crate::par;
use crate::signal::{extract_windows, Screen, Session, DEFAULT_WINDOW_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub window_s: f64,
    pub eda: EdaConfig,
    pub cardio: CardioConfig,
    pub gaze: GazeConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            eda: EdaConfig::default(),
            cardio: CardioConfig::default(),
            gaze: GazeConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{participant}: {source}")]
    Eda { participant: String, source: EdaError },
    #[error("{participant}: {source}")]
    Cardio { participant: String, source: CardioError },
    #[error("window width must be positive")]
    InvalidWindow,
}

/// Full-session skin conductance decomposition. A recording shorter than the
/// response kernel yields `None`, leaving every GSR feature missing.
fn session_eda(s: &Session, cfg: &EdaConfig) -> Result<Option<EdaDecomposition>, FeatureError> {
    let values: Vec<f64> = s.gsr.values().to_vec();
    match eda::decompose(s.gsr.times(), &values, cfg) {
        Ok(d) => Ok(Some(d)),
        Err(EdaError::SeriesTooShort { .. }) => Ok(None),
        Err(source) => Err(FeatureError::Eda { participant: s.meta.participant_id.clone(), source }),
    }
}

/// Beat series of the session. Signals without usable beats give `None`; a
/// sampling rate below the detector minimum is an error.
fn session_ibi(s: &Session, cfg: &CardioConfig) -> Result<Option<IbiSeries>, FeatureError> {
    let found = cardio::detect_beats(s.ppg.times(), s.ppg.values(), s.ppg.nominal_rate(), cfg)
        .and_then(|b| cardio::ibi_series(&b));
    match found {
        Ok(ibi) => Ok(Some(ibi)),
        Err(CardioError::RateTooLow(r)) => Err(FeatureError::Cardio {
            participant: s.meta.participant_id.clone(),
            source: CardioError::RateTooLow(r),
        }),
        Err(_) => Ok(None),
    }
}

pub fn session_features(s: &Session, cfg: &FeatureConfig) -> Result<Vec<FeatureVector>, FeatureError> {
    if !(cfg.window_s > 0.0 && cfg.window_s.is_finite()) {
        return Err(FeatureError::InvalidWindow);
    }
    let eda = session_eda(s, &cfg.eda)?;
    let ibi = session_ibi(s, &cfg.cardio)?;
    let fixations = gaze::detect_fixations(
        s.gaze.times(),
        s.gaze.values(),
        1.0 / s.gaze.nominal_rate(),
        cfg.gaze.dispersion_threshold,
        cfg.gaze.min_duration_s,
    );

    let mut rows = Vec::new();
    for w in extract_windows(s, cfg.window_s) {
        let mut f = [None; N_FEATURES];
        if let (Some(ibi), true) = (&ibi, w.coverage.ppg >= MIN_COVERAGE) {
            let c = cardio::cardiac_features(&w, ibi, cfg.cardio.min_intervals);
            f[0] = c.hr_max;
            f[1] = c.hrv;
            f[2] = c.ibi_mean;
        }
        if w.coverage.gaze >= MIN_COVERAGE {
            let g = gaze::gaze_features(&w, &fixations, cfg.gaze.duration_aggregate);
            for screen in Screen::ALL {
                let a = g[screen.index()];
                f[dataset::fix_count_index(screen)] = Some(a.fix_count);
                f[dataset::fix_dur_index(screen)] = a.fix_dur;
                f[dataset::fix_disp_index(screen)] = a.fix_disp;
            }
        }
        if let Some(d) = &eda {
            let g = eda::gsr_features(&w, d);
            f[15] = g.phasic_mean;
            f[16] = g.phasic_max;
        }
        rows.push(FeatureVector {
            participant_id: s.meta.participant_id.clone(),
            condition: s.meta.condition,
            label_time: w.label_time,
            rating: w.rating,
            label: u8::from(w.rating >= 5),
            features: f,
        });
    }
    Ok(rows)
}

/// Features of every session, assembled in participant then time order.
pub fn extract_features(sessions: &[Session], cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    let per_session = par::map(sessions.len(), |i| session_features(&sessions[i], cfg))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(dataset::assemble_matrix(per_session))
}

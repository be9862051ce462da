//! WebAssembly bindings for the browser demo in `www/`. Every export takes
//! plain numbers or JSON text and returns JSON text; the logic lives in
//! ordinary functions so it can be tested natively.

use serde::Serialize;
use trustphys::eda::{self, EdaConfig};
use trustphys::gaze::{self, Fixation};
use trustphys::signal::{Condition, GazePoint};
use trustphys::synth::{self, CohortConfig, Event, SyntheticSession, TrustSample};
use wasm_bindgen::prelude::*;

fn cohort_config(json: &str) -> Result<CohortConfig, String> {
    let cfg: CohortConfig = if json.trim().is_empty() {
        CohortConfig::default()
    } else {
        serde_json::from_str(json).map_err(|e| e.to_string())?
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub condition: Condition,
    pub events: Vec<Event>,
    pub t: Vec<f64>,
    pub trust: Vec<f64>,
}

/// Latent trust for each condition, sampled every `step_s` seconds.
pub fn trajectories(cfg: &CohortConfig, step_s: f64) -> Vec<Trajectory> {
    let n = (cfg.drive_s / step_s).floor() as usize;
    Condition::ALL
        .into_iter()
        .map(|condition| {
            let events = synth::event_schedule(cfg, condition);
            let t: Vec<f64> = (0..=n).map(|k| k as f64 * step_s).collect();
            let trust = t.iter().map(|&t| synth::latent_trust(&cfg.trust, &events, t)).collect();
            Trajectory { condition, events, t, trust }
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct EdaView {
    pub times: Vec<f64>,
    pub raw_times: Vec<f64>,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub tonic: Vec<f64>,
    pub phasic: Vec<f64>,
    pub driver: Vec<f64>,
    pub residual_rmse: f64,
    /// Generator pulses inside the window.
    pub planted: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct GazeView {
    pub times: Vec<f64>,
    pub points: Vec<GazePoint>,
    pub fixations: Vec<Fixation>,
}

#[derive(Debug, Serialize)]
pub struct SessionSummary<'a> {
    pub participant_id: &'a str,
    pub condition: Condition,
    pub drive_s: f64,
    pub events: &'a [Event],
    pub ratings: &'a [TrustSample],
}

/// One simulated participant held on the JavaScript side.
#[wasm_bindgen]
pub struct DemoSession {
    inner: SyntheticSession,
    drive_s: f64,
}

impl DemoSession {
    pub fn generate(config_json: &str, condition: &str, seed: u64) -> Result<Self, String> {
        let cfg = cohort_config(config_json)?;
        let condition = Condition::parse(condition).ok_or_else(|| format!("unknown condition {condition:?}"))?;
        let inner = synth::generate_participant(&cfg, "demo", condition, seed).map_err(|e| e.to_string())?;
        Ok(Self { inner, drive_s: cfg.drive_s })
    }

    pub fn eda_view(&self, start: f64, length: f64) -> Result<EdaView, String> {
        let gsr = &self.inner.session.gsr;
        let r = gsr.range(start, start + length);
        let (raw_times, raw) = (gsr.times()[r.clone()].to_vec(), gsr.values()[r].to_vec());
        let d = eda::decompose(&raw_times, &raw, &EdaConfig::default()).map_err(|e| e.to_string())?;
        let planted = self
            .inner
            .truth
            .scr_pulses
            .iter()
            .filter(|p| p.t >= start && p.t < start + length)
            .map(|p| (p.t, p.amplitude))
            .collect();
        Ok(EdaView {
            times: d.times,
            raw_times,
            raw,
            smoothed: d.smoothed,
            tonic: d.tonic,
            phasic: d.phasic,
            driver: d.driver,
            residual_rmse: d.residual_rmse,
            planted,
        })
    }

    pub fn gaze_view(&self, start: f64, length: f64, dispersion: f64, min_duration: f64) -> GazeView {
        let g = &self.inner.session.gaze;
        let r = g.range(start, start + length);
        let (times, points) = (g.times()[r.clone()].to_vec(), g.values()[r].to_vec());
        let fixations = gaze::detect_fixations(&times, &points, 1.0 / g.nominal_rate(), dispersion, min_duration);
        GazeView { times, points, fixations }
    }

    pub fn summary(&self) -> SessionSummary<'_> {
        SessionSummary {
            participant_id: &self.inner.truth.participant_id,
            condition: self.inner.truth.condition,
            drive_s: self.drive_s,
            events: &self.inner.truth.events,
            ratings: &self.inner.truth.trajectory,
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo views serialize")
}

#[wasm_bindgen]
impl DemoSession {
    /// `config_json` is a cohort configuration (empty for defaults);
    /// `condition` is `control`, `fa` or `miss`.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str, condition: &str, seed: u64) -> Result<DemoSession, JsError> {
        Self::generate(config_json, condition, seed).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = summary)]
    pub fn summary_json(&self) -> String {
        to_json(&self.summary())
    }

    #[wasm_bindgen(js_name = eda)]
    pub fn eda_json(&self, start: f64, length: f64) -> Result<String, JsError> {
        self.eda_view(start, length).map(|v| to_json(&v)).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = fixations)]
    pub fn gaze_json(&self, start: f64, length: f64, dispersion: f64, min_duration: f64) -> String {
        to_json(&self.gaze_view(start, length, dispersion, min_duration))
    }
}

#[wasm_bindgen(js_name = trustTrajectories)]
pub fn trust_trajectories(config_json: &str, step_s: f64) -> Result<String, JsError> {
    let cfg = cohort_config(config_json).map_err(|e| JsError::new(&e))?;
    if !(step_s > 0.0) {
        return Err(JsError::new("step must be positive"));
    }
    Ok(to_json(&trajectories(&cfg, step_s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miss_condition_dips_below_control() {
        let t = trajectories(&CohortConfig::default(), 5.0);
        assert_eq!(t.len(), 3);
        let min = |c: usize| t[c].trust.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min(2) < min(0) - 2.0);
        assert!(t.iter().all(|c| c.t.len() == c.trust.len()));
    }

    #[test]
    fn session_views() {
        let s = DemoSession::generate(r#"{"drive_s": 200}"#, "miss", 3).unwrap();
        let e = s.eda_view(20.0, 60.0).unwrap();
        assert_eq!(e.times.len(), e.driver.len());
        assert!(e.driver.iter().all(|v| *v >= 0.0));
        let g = s.gaze_view(20.0, 20.0, 0.05, 0.2);
        assert!(!g.fixations.is_empty());
        assert!(g.fixations.iter().all(|f| f.start >= 20.0 && f.end <= 40.0 + 1.0));
        assert!(s.summary_json().contains("\"condition\":\"miss\""));
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(DemoSession::generate("", "nope", 0).is_err());
        assert!(DemoSession::generate(r#"{"bogus": 1}"#, "fa", 0).is_err());
        let s = DemoSession::generate(r#"{"drive_s": 100}"#, "fa", 0).unwrap();
        assert!(s.eda_view(0.0, 2.0).is_err());
    }
}

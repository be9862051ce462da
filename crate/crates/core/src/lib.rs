//! Trust estimation from physiological recordings.
//!
//! Raw skin conductance, photoplethysmogram and gaze streams are cut into
//! pre-rating windows, reduced to 17 features, and fed to a second-order
//! gradient-boosted tree ensemble whose predictions are explained with exact
//! tree Shapley values.

pub mod cardio;
pub mod commands;
pub mod dataset;
pub mod eda;
pub mod explain;
pub mod features;
pub mod gaze;
pub mod models;
pub mod nnls;
pub mod pipeline;
mod par;
pub mod signal;
pub mod stats;
pub mod synth;

pub use par::set_threads;

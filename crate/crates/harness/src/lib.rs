//! Desk-scale experiment harness: enrolls a synthetic population, replays
//! the 100-attempt authentication matrix, runs the time-decay and threshold
//! sweeps, calibrates penalty scales, and renders CSV/SVG reports.

pub mod calibrate;
pub mod config;
pub mod decay;
pub mod matrix;
pub mod plot;
pub mod population;
pub mod registration;
pub mod roc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("subject {subject} has no music that stimulates a chill")]
    NoChillMusicForSubject { subject: String },
    #[error("template store at {0} is empty; run `cras enroll` first")]
    StoreEmpty(String),
    #[error("calibration diverged: {0}")]
    CalibrationDiverged(String),
    #[error("cannot parse report: {0}")]
    ReportParse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Trace(#[from] cras_core::trace::TraceError),
    #[error(transparent)]
    Chill(#[from] cras_core::chill::ChillError),
    #[error(transparent)]
    Segment(#[from] cras_core::segment::SegmentError),
    #[error(transparent)]
    Enroll(#[from] cras_core::enroll::EnrollError),
    #[error(transparent)]
    Scoring(#[from] cras_core::scoring::ScoringError),
    #[error(transparent)]
    Synth(#[from] cras_core::synth::SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

//! One-minute chill segment selection: n-way overlap of the chill intervals
//! found across full listens, automatic or manual placement of the
//! 60-second window, and verification that the chosen segment still
//! stimulates a chill.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chill::{
    baseline_stats, detect_chills, ChillDirection, ChillError, ChillInterval, DetectorConfig,
};
use crate::trace::{validate_cycle, Channel, MonitoringCycle, ValidationConfig};

/// Length of every registered segment, in seconds.
pub const SEGMENT_LEN_S: f64 = 60.0;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("no overlap of at least {min_overlap_s} s across the listens")]
    NoQualifyingOverlap { min_overlap_s: f64 },
    #[error("track of {track_duration_s:.1} s cannot fit a {SEGMENT_LEN_S} s segment")]
    TrackTooShort { track_duration_s: f64 },
    #[error("selection point {point_s:.1} s is outside the track")]
    PointOutsideTrack { point_s: f64 },
    #[error("segment cycle failed validation: {0}")]
    ValidationFailed(String),
    #[error(transparent)]
    Chill(#[from] ChillError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentSource {
    Auto,
    Manual,
}

/// The one-minute window of a track registered as the authentication
/// stimulus. Always exactly 60 s and inside the track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChillSegment {
    pub music_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub source: SegmentSource,
}

impl ChillSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Maximal intervals contained in at least one interval of every list.
/// Lists must each be sorted and disjoint (as produced by detection);
/// direction is ignored here.
pub fn overlap_intervals(interval_lists: &[Vec<ChillInterval>]) -> Vec<(f64, f64)> {
    let mut lists = interval_lists
        .iter()
        .map(|l| l.iter().map(ChillInterval::span).collect::<Vec<_>>());
    let Some(first) = lists.next() else {
        return Vec::new();
    };
    lists.fold(first, |acc, next| intersect_spans(&acc, &next))
}

fn intersect_spans(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let start = a[i].0.max(b[j].0);
        let end = a[i].1.min(b[j].1);
        if start < end {
            out.push((start, end));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Overlaps for segment selection. With `require_direction_match` the
/// intersection runs per excursion direction and the results are merged.
pub fn overlaps_for(
    interval_lists: &[Vec<ChillInterval>],
    require_direction_match: bool,
) -> Vec<(f64, f64)> {
    if !require_direction_match {
        return overlap_intervals(interval_lists);
    }
    let filtered = |dir: ChillDirection| -> Vec<Vec<ChillInterval>> {
        interval_lists
            .iter()
            .map(|l| l.iter().filter(|i| i.direction == dir).cloned().collect())
            .collect()
    };
    let mut out = overlap_intervals(&filtered(ChillDirection::Above));
    out.extend(overlap_intervals(&filtered(ChillDirection::Below)));
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Center a 60-second window on `mid`, shifting inward as little as needed
/// to stay inside `[0, track_duration_s]`.
fn window_around(mid: f64, track_duration_s: f64) -> (f64, f64) {
    let mut start = mid - SEGMENT_LEN_S / 2.0;
    if start < 0.0 {
        start = 0.0;
    } else if start + SEGMENT_LEN_S > track_duration_s {
        start = track_duration_s - SEGMENT_LEN_S;
    }
    (start, start + SEGMENT_LEN_S)
}

/// Pick the segment from overlap analysis: 30 seconds either side of the
/// midpoint of the longest qualifying overlap (earliest start on ties).
pub fn auto_select_segment(
    interval_lists: &[Vec<ChillInterval>],
    track_duration_s: f64,
    min_overlap_s: f64,
    music_id: &str,
    require_direction_match: bool,
) -> Result<ChillSegment, SegmentError> {
    if track_duration_s < SEGMENT_LEN_S {
        return Err(SegmentError::TrackTooShort { track_duration_s });
    }
    let overlaps = overlaps_for(interval_lists, require_direction_match);
    let best = overlaps
        .iter()
        .filter(|(s, e)| e - s >= min_overlap_s - 1e-9)
        // Longest wins; earliest start breaks ties.
        .max_by(|a, b| {
            (a.1 - a.0)
                .total_cmp(&(b.1 - b.0))
                .then(b.0.total_cmp(&a.0))
        })
        .ok_or(SegmentError::NoQualifyingOverlap { min_overlap_s })?;
    let mid = (best.0 + best.1) / 2.0;
    let (start_s, end_s) = window_around(mid, track_duration_s);
    Ok(ChillSegment {
        music_id: music_id.to_string(),
        start_s,
        end_s,
        source: SegmentSource::Auto,
    })
}

/// Segment centered on a point the subject chose themselves.
pub fn manual_select_segment(
    point_s: f64,
    track_duration_s: f64,
    music_id: &str,
) -> Result<ChillSegment, SegmentError> {
    if track_duration_s < SEGMENT_LEN_S {
        return Err(SegmentError::TrackTooShort { track_duration_s });
    }
    if !(0.0..=track_duration_s).contains(&point_s) {
        return Err(SegmentError::PointOutsideTrack { point_s });
    }
    let (start_s, end_s) = window_around(point_s, track_duration_s);
    Ok(ChillSegment {
        music_id: music_id.to_string(),
        start_s,
        end_s,
        source: SegmentSource::Manual,
    })
}

/// Play back the candidate segment and check the responses: acceptable only
/// if the equipment checks pass and a heart-rate chill shows up against the
/// cycle's own fresh baseline.
pub fn verify_segment(
    cycle: &MonitoringCycle,
    detector: &DetectorConfig,
    validation: &ValidationConfig,
) -> Result<bool, SegmentError> {
    let report = validate_cycle(cycle, validation);
    if !report.passed() {
        return Err(SegmentError::ValidationFailed(report.summary()));
    }
    let baseline = cycle
        .baseline_channel(Channel::HeartRate)
        .ok_or(ChillError::MissingHeartRate)?;
    let stimulus = cycle
        .stimulus_channel(Channel::HeartRate)
        .ok_or(ChillError::MissingHeartRate)?;
    let stats = baseline_stats(baseline)?;
    stats.require_sufficient()?;
    Ok(!detect_chills(stimulus, &stats, detector).is_empty())
}

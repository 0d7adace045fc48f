//! Baseline statistics and chill detection: a chill is a maximal run of at
//! least five seconds where every sample sits more than one baseline
//! standard deviation away from the baseline mean, all on the same side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Channel, MonitoringCycle, SampleSeries};

/// Fewer baseline samples than this cannot give trustworthy statistics
/// (a one-minute baseline at the slowest channel rate yields 60).
pub const MIN_BASELINE_SAMPLES: usize = 30;

#[derive(Debug, Error)]
pub enum ChillError {
    #[error("sample series is empty")]
    EmptySeries,
    #[error("music verification needs at least 2 full listens, got {got}")]
    TooFewListens { got: usize },
    #[error("cycles mix subjects or music: {0}")]
    MixedCycles(String),
    #[error("baseline has {got} samples, need at least {need}")]
    TooFewBaselineSamples { got: usize, need: usize },
    #[error("cycle has no heart-rate channel")]
    MissingHeartRate,
}

/// Detection knobs. `sigma_multiplier` scales the excursion threshold and
/// `require_direction_match` makes segment selection overlap excursions of
/// the same sign only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub min_chill_s: f64,
    pub sigma_multiplier: f64,
    pub require_direction_match: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_chill_s: 5.0,
            sigma_multiplier: 1.0,
            require_direction_match: false,
        }
    }
}

/// Mean and population standard deviation of one channel's baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub channel: Channel,
    pub mean: f64,
    pub stdev: f64,
    pub sample_count: usize,
}

impl BaselineStats {
    /// Statistics used to gate authentication decisions must rest on a full
    /// baseline; short ones fail loudly here.
    pub fn require_sufficient(&self) -> Result<(), ChillError> {
        if self.sample_count < MIN_BASELINE_SAMPLES {
            return Err(ChillError::TooFewBaselineSamples {
                got: self.sample_count,
                need: MIN_BASELINE_SAMPLES,
            });
        }
        Ok(())
    }
}

/// Arithmetic mean and population standard deviation of the series values.
pub fn baseline_stats(series: &SampleSeries) -> Result<BaselineStats, ChillError> {
    if series.values.is_empty() {
        return Err(ChillError::EmptySeries);
    }
    let n = series.values.len() as f64;
    let mean = series.values.iter().sum::<f64>() / n;
    let var = series
        .values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Ok(BaselineStats {
        channel: series.channel,
        mean,
        stdev: var.sqrt(),
        sample_count: series.values.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChillDirection {
    Above,
    Below,
}

/// A detected excursion. Endpoints are the timestamps of the first and last
/// qualifying samples on the series timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChillInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub direction: ChillDirection,
}

impl ChillInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start_s, self.end_s)
    }
}

fn classify(value: f64, stats: &BaselineStats, sigma_multiplier: f64) -> Option<ChillDirection> {
    let threshold = sigma_multiplier * stats.stdev;
    let deviation = value - stats.mean;
    if deviation > threshold {
        Some(ChillDirection::Above)
    } else if deviation < -threshold {
        Some(ChillDirection::Below)
    } else {
        None
    }
}

/// Find all maximal same-direction excursion runs lasting at least
/// `cfg.min_chill_s`, ordered by start time and pairwise disjoint.
///
/// A sample qualifies when it deviates from the baseline mean by strictly
/// more than `sigma_multiplier * stdev`; a zero-stdev baseline makes any
/// nonzero deviation qualify.
pub fn detect_chills(
    series: &SampleSeries,
    stats: &BaselineStats,
    cfg: &DetectorConfig,
) -> Vec<ChillInterval> {
    let mut intervals = Vec::new();
    let mut run_start: Option<(usize, ChillDirection)> = None;

    let close_run =
        |start: usize, end: usize, dir: ChillDirection, out: &mut Vec<ChillInterval>| {
            let start_s = series.timestamp(start);
            let end_s = series.timestamp(end);
            if end_s - start_s >= cfg.min_chill_s - 1e-9 {
                out.push(ChillInterval {
                    start_s,
                    end_s,
                    direction: dir,
                });
            }
        };

    for (i, &v) in series.values.iter().enumerate() {
        let class = classify(v, stats, cfg.sigma_multiplier);
        match (run_start, class) {
            (None, Some(dir)) => run_start = Some((i, dir)),
            (Some((start, dir)), Some(new_dir)) if dir != new_dir => {
                close_run(start, i - 1, dir, &mut intervals);
                run_start = Some((i, new_dir));
            }
            (Some((start, dir)), None) => {
                close_run(start, i - 1, dir, &mut intervals);
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some((start, dir)) = run_start {
        close_run(start, series.values.len() - 1, dir, &mut intervals);
    }
    intervals
}

/// Outcome of music verification: the verdict plus the intervals found in
/// each listen, in submission order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChillMusicVerdict {
    pub verdict: bool,
    pub per_cycle_intervals: Vec<Vec<ChillInterval>>,
}

/// A piece of music is chill music for a subject only if every full listen
/// produced at least one heart-rate chill against that listen's own baseline.
pub fn is_chill_music(
    cycles: &[MonitoringCycle],
    cfg: &DetectorConfig,
) -> Result<ChillMusicVerdict, ChillError> {
    if cycles.len() < 2 {
        return Err(ChillError::TooFewListens { got: cycles.len() });
    }
    let first = &cycles[0];
    for c in cycles {
        if c.subject_id != first.subject_id || c.music_id != first.music_id {
            return Err(ChillError::MixedCycles(format!(
                "expected {}/{}, got {}/{}",
                first.subject_id, first.music_id, c.subject_id, c.music_id
            )));
        }
    }

    let mut per_cycle_intervals = Vec::with_capacity(cycles.len());
    let mut verdict = true;
    for cycle in cycles {
        let baseline = cycle
            .baseline_channel(Channel::HeartRate)
            .ok_or(ChillError::MissingHeartRate)?;
        let stimulus = cycle
            .stimulus_channel(Channel::HeartRate)
            .ok_or(ChillError::MissingHeartRate)?;
        let stats = baseline_stats(baseline)?;
        stats.require_sufficient()?;
        let intervals = detect_chills(stimulus, &stats, cfg);
        verdict &= !intervals.is_empty();
        per_cycle_intervals.push(intervals);
    }
    Ok(ChillMusicVerdict {
        verdict,
        per_cycle_intervals,
    })
}

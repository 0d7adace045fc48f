//! Signal data model: channels, sample series, monitoring cycles, the
//! JSON-lines trace format, resampling, cycle validation, and response
//! sanitization.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum baseline coverage per channel, in seconds.
pub const MIN_BASELINE_S: f64 = 60.0;
/// Stimuli shorter than this are rejected outright; after trimming they
/// could no longer hold a five-second chill.
pub const MIN_STIMULUS_S: f64 = 30.0;
/// Seconds removed from each end of a stimulus during sanitization.
pub const TRIM_S: f64 = 10.0;
/// Common comparison rate for the heart-rate channel.
pub const HEART_RATE_HZ: f64 = 2.0;
/// Common comparison rate for the neurological channels.
pub const EEG_HZ: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("required channel {0} is missing")]
    MissingChannel(Channel),
    #[error("channel {0} is present in only one phase")]
    PhaseMismatch(Channel),
    #[error("no neurological channel present")]
    NoNeurologicalChannel,
    #[error("baseline for {channel} covers {duration_s:.1} s, need {MIN_BASELINE_S} s")]
    ShortBaseline { channel: Channel, duration_s: f64 },
    #[error("sample series is empty")]
    EmptySeries,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("stimulus of {duration_s:.1} s is too short (minimum {MIN_STIMULUS_S} s)")]
    StimulusTooShort { duration_s: f64 },
    #[error("cycles share no common channels")]
    NoCommonChannels,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One monitored signal. `HeartRate` is the physiological channel; the rest
/// are the headset's EEG band-power sub-bands. Devices that report one
/// combined value per wave family may label it with the family name
/// (`Alpha`, `Beta`, `Gamma`); those parse as the first sub-band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    HeartRate,
    #[serde(alias = "Alpha")]
    Alpha1,
    Alpha2,
    #[serde(alias = "Beta")]
    Beta1,
    Beta2,
    #[serde(alias = "Gamma")]
    Gamma1,
    Gamma2,
    Delta,
    Theta,
}

impl Channel {
    pub const ALL: [Channel; 9] = [
        Channel::HeartRate,
        Channel::Alpha1,
        Channel::Alpha2,
        Channel::Beta1,
        Channel::Beta2,
        Channel::Gamma1,
        Channel::Gamma2,
        Channel::Delta,
        Channel::Theta,
    ];

    pub fn is_neurological(self) -> bool {
        !matches!(self, Channel::HeartRate)
    }

    /// Rate every series on this channel is resampled to before comparison.
    pub fn canonical_rate(self) -> f64 {
        if self.is_neurological() {
            EEG_HZ
        } else {
            HEART_RATE_HZ
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::HeartRate => "HeartRate",
            Channel::Alpha1 => "Alpha1",
            Channel::Alpha2 => "Alpha2",
            Channel::Beta1 => "Beta1",
            Channel::Beta2 => "Beta2",
            Channel::Gamma1 => "Gamma1",
            Channel::Gamma2 => "Gamma2",
            Channel::Delta => "Delta",
            Channel::Theta => "Theta",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Alpha" => return Ok(Channel::Alpha1),
            "Beta" => return Ok(Channel::Beta1),
            "Gamma" => return Ok(Channel::Gamma1),
            _ => {}
        }
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| TraceError::InvalidSeries(format!("unknown channel {s:?}")))
    }
}

/// Uniformly sampled values for one channel. `start_offset` is seconds from
/// the start of the phase the series belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    pub channel: Channel,
    pub rate: f64,
    pub values: Vec<f64>,
    pub start_offset: f64,
}

impl SampleSeries {
    pub fn new(
        channel: Channel,
        rate: f64,
        values: Vec<f64>,
        start_offset: f64,
    ) -> Result<Self, TraceError> {
        if values.is_empty() {
            return Err(TraceError::EmptySeries);
        }
        if !rate.is_finite() || rate <= 0.0 {
            return Err(TraceError::InvalidSeries(format!(
                "rate {rate} must be > 0"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(TraceError::InvalidSeries(format!(
                "value {v} on {channel} is negative or non-finite"
            )));
        }
        Ok(Self {
            channel,
            rate,
            values,
            start_offset,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Nominal duration covered by the series (one sample period per sample).
    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate
    }

    /// Time between the first and last sample.
    pub fn span_s(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 / self.rate
    }

    /// Timestamp of sample `i` on the phase timeline.
    pub fn timestamp(&self, i: usize) -> f64 {
        self.start_offset + i as f64 / self.rate
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Baseline,
    Stimulus,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Baseline => f.write_str("baseline"),
            Phase::Stimulus => f.write_str("stimulus"),
        }
    }
}

/// A stretch of missing samples the parser had to fill by interpolation.
/// Times are relative to the phase start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub channel: Channel,
    pub phase: Phase,
    pub start_s: f64,
    pub length_s: f64,
}

/// One baseline period plus one stimulus period for one subject/music pair.
/// Series are kept sorted by channel; baseline and stimulus always cover the
/// same channel set, heart rate is always present, and so is at least one
/// neurological channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringCycle {
    pub subject_id: String,
    pub music_id: String,
    pub baseline: Vec<SampleSeries>,
    pub stimulus: Vec<SampleSeries>,
    pub stimulus_duration: f64,
    pub gaps: Vec<GapRecord>,
}

impl MonitoringCycle {
    pub fn new(
        subject_id: impl Into<String>,
        music_id: impl Into<String>,
        mut baseline: Vec<SampleSeries>,
        mut stimulus: Vec<SampleSeries>,
        stimulus_duration: f64,
        gaps: Vec<GapRecord>,
    ) -> Result<Self, TraceError> {
        baseline.sort_by_key(|s| s.channel);
        stimulus.sort_by_key(|s| s.channel);

        let baseline_channels: BTreeSet<Channel> = baseline.iter().map(|s| s.channel).collect();
        let stimulus_channels: BTreeSet<Channel> = stimulus.iter().map(|s| s.channel).collect();
        if baseline_channels.len() != baseline.len() || stimulus_channels.len() != stimulus.len() {
            return Err(TraceError::InvalidSeries("duplicate channel series".into()));
        }
        if let Some(ch) = baseline_channels
            .symmetric_difference(&stimulus_channels)
            .next()
        {
            return Err(TraceError::PhaseMismatch(*ch));
        }
        if !baseline_channels.contains(&Channel::HeartRate) {
            return Err(TraceError::MissingChannel(Channel::HeartRate));
        }
        if !baseline_channels.iter().any(|c| c.is_neurological()) {
            return Err(TraceError::NoNeurologicalChannel);
        }
        for series in &baseline {
            // Allow a hair of float slack on the 60 s requirement.
            if series.duration_s() < MIN_BASELINE_S - 1e-9 {
                return Err(TraceError::ShortBaseline {
                    channel: series.channel,
                    duration_s: series.duration_s(),
                });
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            music_id: music_id.into(),
            baseline,
            stimulus,
            stimulus_duration,
            gaps,
        })
    }

    pub fn channels(&self) -> BTreeSet<Channel> {
        self.baseline.iter().map(|s| s.channel).collect()
    }

    pub fn baseline_channel(&self, channel: Channel) -> Option<&SampleSeries> {
        self.baseline.iter().find(|s| s.channel == channel)
    }

    pub fn stimulus_channel(&self, channel: Channel) -> Option<&SampleSeries> {
        self.stimulus.iter().find(|s| s.channel == channel)
    }
}

/// Baseline-stripped, edge-trimmed, rate-aligned responses ready for
/// comparison. Reference and probe cover the same channels at the same
/// rates and lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedPair {
    pub reference: Vec<SampleSeries>,
    pub probe: Vec<SampleSeries>,
}

impl SanitizedPair {
    pub fn channels(&self) -> BTreeSet<Channel> {
        self.reference.iter().map(|s| s.channel).collect()
    }

    pub fn channel(&self, channel: Channel) -> Option<(&SampleSeries, &SampleSeries)> {
        let r = self.reference.iter().find(|s| s.channel == channel)?;
        let p = self.probe.iter().find(|s| s.channel == channel)?;
        Some((r, p))
    }
}

// ---------------------------------------------------------------------------
// Trace file format (JSON lines)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct PhaseBoundaries {
    baseline_s: f64,
    stimulus_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TraceRecord {
    Header {
        subject: String,
        music: String,
        phase_boundaries: PhaseBoundaries,
    },
    Sample {
        t: f64,
        channel: Channel,
        value: f64,
    },
}

/// Parse a JSON-lines trace into a validated cycle.
///
/// The first non-empty line must be the header; every other line is one
/// sample. Samples with `t` before the baseline boundary belong to the
/// baseline, the rest to the stimulus. Interior dropouts are filled by
/// linear interpolation and reported in [`MonitoringCycle::gaps`].
pub fn parse_trace(reader: impl BufRead) -> Result<MonitoringCycle, TraceError> {
    let mut header: Option<(String, String, PhaseBoundaries)> = None;
    // (channel, phase) -> (t, value) pairs, phase-relative times.
    let mut buckets: std::collections::BTreeMap<(Channel, Phase), Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(trimmed).map_err(|e| TraceError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        match record {
            TraceRecord::Header {
                subject,
                music,
                phase_boundaries,
            } => {
                if header.is_some() {
                    return Err(TraceError::MalformedRecord {
                        line: line_no,
                        reason: "duplicate header".into(),
                    });
                }
                let bounds_ok =
                    phase_boundaries.baseline_s > 0.0 && phase_boundaries.stimulus_s > 0.0;
                if !bounds_ok {
                    return Err(TraceError::MalformedRecord {
                        line: line_no,
                        reason: "phase boundaries must be positive".into(),
                    });
                }
                header = Some((subject, music, phase_boundaries));
            }
            TraceRecord::Sample { t, channel, value } => {
                let Some((_, _, bounds)) = header.as_ref() else {
                    return Err(TraceError::MalformedRecord {
                        line: line_no,
                        reason: "sample before header".into(),
                    });
                };
                if !t.is_finite() || t < 0.0 || t > bounds.baseline_s + bounds.stimulus_s + 1e-9 {
                    return Err(TraceError::MalformedRecord {
                        line: line_no,
                        reason: format!("timestamp {t} outside cycle bounds"),
                    });
                }
                if !value.is_finite() || value < 0.0 {
                    return Err(TraceError::MalformedRecord {
                        line: line_no,
                        reason: format!("value {value} is negative or non-finite"),
                    });
                }
                let (phase, offset) = if t < bounds.baseline_s {
                    (Phase::Baseline, t)
                } else {
                    (Phase::Stimulus, t - bounds.baseline_s)
                };
                buckets
                    .entry((channel, phase))
                    .or_default()
                    .push((offset, value));
            }
        }
    }

    let (subject, music, bounds) = header.ok_or(TraceError::MalformedRecord {
        line: 0,
        reason: "missing header".into(),
    })?;

    let mut baseline = Vec::new();
    let mut stimulus = Vec::new();
    let mut gaps = Vec::new();
    for ((channel, phase), mut samples) in buckets {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let phase_len = match phase {
            Phase::Baseline => bounds.baseline_s,
            Phase::Stimulus => bounds.stimulus_s,
        };
        let series = build_series(channel, phase, &samples, phase_len, &mut gaps)?;
        match phase {
            Phase::Baseline => baseline.push(series),
            Phase::Stimulus => stimulus.push(series),
        }
    }

    if !baseline.iter().any(|s| s.channel == Channel::HeartRate)
        && !stimulus.iter().any(|s| s.channel == Channel::HeartRate)
    {
        return Err(TraceError::MissingChannel(Channel::HeartRate));
    }

    MonitoringCycle::new(subject, music, baseline, stimulus, bounds.stimulus_s, gaps)
}

/// Reconstruct a uniform series from timestamped samples, interpolating
/// interior dropouts and recording them (plus leading/trailing coverage
/// deficits) as gaps.
fn build_series(
    channel: Channel,
    phase: Phase,
    samples: &[(f64, f64)],
    phase_len: f64,
    gaps: &mut Vec<GapRecord>,
) -> Result<SampleSeries, TraceError> {
    let malformed = |reason: String| TraceError::MalformedRecord { line: 0, reason };
    if samples.len() < 2 {
        return Err(malformed(format!(
            "channel {channel} ({phase}) has fewer than two samples"
        )));
    }
    let mut deltas: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
    deltas.sort_by(f64::total_cmp);
    let step = deltas[deltas.len() / 2];
    if step <= 0.0 {
        return Err(malformed(format!(
            "duplicate timestamps on {channel} ({phase})"
        )));
    }

    let t0 = samples[0].0;
    let mut slots: Vec<Option<f64>> = Vec::new();
    let mut last_idx: Option<usize> = None;
    for &(t, v) in samples {
        let k = ((t - t0) / step).round() as usize;
        let on_grid = (t - (t0 + k as f64 * step)).abs() <= step * 0.05;
        if !on_grid {
            return Err(malformed(format!(
                "sample at t={t} on {channel} ({phase}) is off the {step}-second grid"
            )));
        }
        if last_idx == Some(k) {
            return Err(malformed(format!(
                "duplicate sample slot at t={t} on {channel} ({phase})"
            )));
        }
        if slots.len() < k + 1 {
            slots.resize(k + 1, None);
        }
        slots[k] = Some(v);
        last_idx = Some(k);
    }

    // Fill interior holes by interpolation between the bracketing samples.
    let mut values = Vec::with_capacity(slots.len());
    let mut i = 0;
    while i < slots.len() {
        match slots[i] {
            Some(v) => {
                values.push(v);
                i += 1;
            }
            None => {
                let run_start = i;
                while slots[i].is_none() {
                    i += 1;
                }
                let run_len = i - run_start;
                let before = values[run_start - 1];
                let after = slots[i].expect("run ends at a real sample");
                for j in 0..run_len {
                    let frac = (j + 1) as f64 / (run_len + 1) as f64;
                    values.push(before + (after - before) * frac);
                }
                gaps.push(GapRecord {
                    channel,
                    phase,
                    start_s: t0 + run_start as f64 * step,
                    length_s: run_len as f64 * step,
                });
            }
        }
    }

    // Coverage deficits at the stimulus edges count as gaps too; baseline
    // coverage is governed by the 60-second invariant instead, since its
    // channels legitimately end at slightly different times.
    if phase == Phase::Stimulus {
        if t0 > step + 1e-9 {
            gaps.push(GapRecord {
                channel,
                phase,
                start_s: 0.0,
                length_s: t0,
            });
        }
        let covered_end = t0 + slots.len() as f64 * step;
        if phase_len - covered_end > step + 1e-9 {
            gaps.push(GapRecord {
                channel,
                phase,
                start_s: covered_end,
                length_s: phase_len - covered_end,
            });
        }
    }

    SampleSeries::new(channel, 1.0 / step, values, t0)
}

/// Serialize a cycle back to the JSON-lines trace format. Inverse of
/// [`parse_trace`] for gapless cycles.
pub fn serialize_trace(cycle: &MonitoringCycle) -> String {
    let baseline_s = cycle
        .baseline
        .iter()
        .map(|s| s.start_offset + s.duration_s())
        .fold(0.0f64, f64::max)
        .max(MIN_BASELINE_S);
    let mut out = String::new();
    let header = TraceRecord::Header {
        subject: cycle.subject_id.clone(),
        music: cycle.music_id.clone(),
        phase_boundaries: PhaseBoundaries {
            baseline_s,
            stimulus_s: cycle.stimulus_duration,
        },
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    let mut push_samples = |series: &[SampleSeries], phase_start: f64| {
        for s in series {
            for (i, v) in s.values.iter().enumerate() {
                let record = TraceRecord::Sample {
                    t: phase_start + s.timestamp(i),
                    channel: s.channel,
                    value: *v,
                };
                out.push_str(&serde_json::to_string(&record).expect("sample serializes"));
                out.push('\n');
            }
        }
    };
    push_samples(&cycle.baseline, 0.0);
    push_samples(&cycle.stimulus, baseline_s);
    out
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Linear interpolation onto a uniform grid at `target_rate`, covering the
/// same sample span. The first sample is preserved exactly; resampling to
/// the source rate is the identity.
pub fn resample(series: &SampleSeries, target_rate: f64) -> Result<SampleSeries, TraceError> {
    if series.values.is_empty() {
        return Err(TraceError::EmptySeries);
    }
    if !target_rate.is_finite() || target_rate <= 0.0 {
        return Err(TraceError::InvalidSeries(format!(
            "target rate {target_rate} must be > 0"
        )));
    }
    if (target_rate - series.rate).abs() < 1e-12 {
        return Ok(series.clone());
    }
    let span = series.span_s();
    let n_out = (span * target_rate + 1e-9).floor() as usize + 1;
    let mut values = Vec::with_capacity(n_out);
    let last = series.values.len() - 1;
    for i in 0..n_out {
        let pos = (i as f64 / target_rate) * series.rate;
        let j = (pos.floor() as usize).min(last);
        let frac = pos - j as f64;
        let v = if j >= last || frac <= 0.0 {
            series.values[j]
        } else {
            series.values[j] * (1.0 - frac) + series.values[j + 1] * frac
        };
        values.push(v);
    }
    SampleSeries::new(series.channel, target_rate, values, series.start_offset)
}

// ---------------------------------------------------------------------------
// Cycle validation
// ---------------------------------------------------------------------------

/// Equipment/comfort checks applied to a parsed cycle. Defaults: dropouts
/// up to five seconds tolerated, five-second flatline limit, and a resting
/// heart-rate comfort band of 50-100 BPM.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub max_gap_s: f64,
    pub max_flatline_s: f64,
    pub comfort_band: (f64, f64),
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            max_gap_s: 5.0,
            max_flatline_s: 5.0,
            comfort_band: (50.0, 100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationCheck {
    MaxGap,
    Flatline,
    ComfortBand,
}

impl fmt::Display for ValidationCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationCheck::MaxGap => f.write_str("max-gap"),
            ValidationCheck::Flatline => f.write_str("flatline"),
            ValidationCheck::ComfortBand => f.write_str("comfort-band"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: ValidationCheck,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn summary(&self) -> String {
        self.failures()
            .map(|c| format!("{}: {}", c.check, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Run the equipment checks. Failures are report entries, never errors.
pub fn validate_cycle(cycle: &MonitoringCycle, cfg: &ValidationConfig) -> ValidationReport {
    let mut checks = Vec::with_capacity(3);

    let worst_gap = cycle
        .gaps
        .iter()
        .max_by(|a, b| a.length_s.total_cmp(&b.length_s));
    checks.push(match worst_gap {
        Some(g) if g.length_s > cfg.max_gap_s => CheckResult {
            check: ValidationCheck::MaxGap,
            passed: false,
            detail: format!(
                "{:.1} s of missing {} samples in {} at {:.1} s (limit {:.1} s)",
                g.length_s, g.channel, g.phase, g.start_s, cfg.max_gap_s
            ),
        },
        Some(g) => CheckResult {
            check: ValidationCheck::MaxGap,
            passed: true,
            detail: format!(
                "worst gap {:.1} s within the {:.1} s limit",
                g.length_s, cfg.max_gap_s
            ),
        },
        None => CheckResult {
            check: ValidationCheck::MaxGap,
            passed: true,
            detail: "no gaps".into(),
        },
    });

    let mut worst_flat = 0.0f64;
    for series in [
        cycle.baseline_channel(Channel::HeartRate),
        cycle.stimulus_channel(Channel::HeartRate),
    ]
    .into_iter()
    .flatten()
    {
        let mut run = 1usize;
        for w in series.values.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                run = 1;
            }
            worst_flat = worst_flat.max((run - 1) as f64 / series.rate);
        }
    }
    checks.push(CheckResult {
        check: ValidationCheck::Flatline,
        passed: worst_flat <= cfg.max_flatline_s,
        detail: format!(
            "longest heart-rate flatline {:.1} s (limit {:.1} s)",
            worst_flat, cfg.max_flatline_s
        ),
    });

    let (lo, hi) = cfg.comfort_band;
    let hr_mean = cycle.baseline_channel(Channel::HeartRate).map(|s| s.mean());
    checks.push(match hr_mean {
        Some(m) => CheckResult {
            check: ValidationCheck::ComfortBand,
            passed: m >= lo && m <= hi,
            detail: format!("baseline heart rate {m:.1} BPM, band [{lo:.0}, {hi:.0}]"),
        },
        None => CheckResult {
            check: ValidationCheck::ComfortBand,
            passed: false,
            detail: "no heart-rate baseline".into(),
        },
    });

    ValidationReport { checks }
}

// ---------------------------------------------------------------------------
// Sanitization
// ---------------------------------------------------------------------------

/// Strip the baseline, resample the stimulus to the per-channel comparison
/// rate, and drop the first and last ten seconds, keeping the middle window
/// where the chill is expected.
pub fn sanitize_stimulus(cycle: &MonitoringCycle) -> Result<Vec<SampleSeries>, TraceError> {
    if cycle.stimulus_duration < MIN_STIMULUS_S - 1e-9 {
        return Err(TraceError::StimulusTooShort {
            duration_s: cycle.stimulus_duration,
        });
    }
    let mut out = Vec::with_capacity(cycle.stimulus.len());
    for series in &cycle.stimulus {
        let rate = series.channel.canonical_rate();
        let resampled = resample(series, rate)?;
        // Trim on the stimulus timeline, so late-starting series stay
        // aligned with full-coverage ones: keep t in [TRIM_S, duration - TRIM_S).
        let keep_from = ((TRIM_S - resampled.start_offset) * rate - 1e-9).ceil().max(0.0) as usize;
        let end_s = cycle.stimulus_duration - TRIM_S;
        let keep_to = (((end_s - resampled.start_offset) * rate - 1e-9).ceil().max(0.0) as usize)
            .min(resampled.values.len());
        if keep_from >= keep_to {
            return Err(TraceError::StimulusTooShort {
                duration_s: cycle.stimulus_duration,
            });
        }
        let start_offset = resampled.start_offset + keep_from as f64 / rate;
        let values = resampled.values[keep_from..keep_to].to_vec();
        out.push(SampleSeries::new(series.channel, rate, values, start_offset)?);
    }
    Ok(out)
}

/// Sanitize both cycles and pair them over their common channels, truncated
/// to equal per-channel lengths.
pub fn sanitize(
    reference: &MonitoringCycle,
    probe: &MonitoringCycle,
) -> Result<SanitizedPair, TraceError> {
    let r = sanitize_stimulus(reference)?;
    let p = sanitize_stimulus(probe)?;
    pair_sanitized(r, p)
}

/// Pair two already-sanitized channel sets (e.g. a stored template against a
/// fresh probe), intersecting channels and equalizing lengths.
pub fn pair_sanitized(
    reference: Vec<SampleSeries>,
    probe: Vec<SampleSeries>,
) -> Result<SanitizedPair, TraceError> {
    let mut ref_out = Vec::new();
    let mut probe_out = Vec::new();
    for r in reference {
        let Some(p) = probe.iter().find(|p| p.channel == r.channel) else {
            continue;
        };
        let n = r.values.len().min(p.values.len());
        let mut r = r;
        let mut p = p.clone();
        r.values.truncate(n);
        p.values.truncate(n);
        ref_out.push(r);
        probe_out.push(p);
    }
    if ref_out.is_empty() {
        return Err(TraceError::NoCommonChannels);
    }
    ref_out.sort_by_key(|s| s.channel);
    probe_out.sort_by_key(|s| s.channel);
    Ok(SanitizedPair {
        reference: ref_out,
        probe: probe_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn hr_series(rate: f64, values: Vec<f64>) -> SampleSeries {
        SampleSeries::new(Channel::HeartRate, rate, values, 0.0).unwrap()
    }

    fn simple_cycle(baseline_s: f64, stimulus_s: f64) -> MonitoringCycle {
        let hr_b = hr_series(2.0, vec![72.0; (baseline_s * 2.0) as usize]);
        let hr_s = hr_series(
            2.0,
            (0..(stimulus_s * 2.0) as usize)
                .map(|i| 70.0 + (i % 7) as f64)
                .collect(),
        );
        let a_b =
            SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; baseline_s as usize], 0.0).unwrap();
        let a_s = SampleSeries::new(
            Channel::Alpha1,
            1.0,
            (0..stimulus_s as usize)
                .map(|i| 48.0 + (i % 5) as f64)
                .collect(),
            0.0,
        )
        .unwrap();
        MonitoringCycle::new(
            "S1",
            "M1",
            vec![hr_b, a_b],
            vec![hr_s, a_s],
            stimulus_s,
            vec![],
        )
        .unwrap()
    }

    fn trace_text(baseline_s: f64, stimulus_s: f64, with_hr: bool) -> String {
        let mut out = format!(
            "{{\"type\":\"header\",\"subject\":\"S1\",\"music\":\"M1\",\"phase_boundaries\":{{\"baseline_s\":{baseline_s},\"stimulus_s\":{stimulus_s}}}}}\n"
        );
        let total = baseline_s + stimulus_s;
        if with_hr {
            let n = (total * 2.0) as usize;
            for i in 0..n {
                let t = i as f64 * 0.5;
                out.push_str(&format!(
                    "{{\"type\":\"sample\",\"t\":{t},\"channel\":\"HeartRate\",\"value\":{}}}\n",
                    74.0 + (i % 3) as f64
                ));
            }
        }
        for i in 0..total as usize {
            let t = i as f64;
            out.push_str(&format!(
                "{{\"type\":\"sample\",\"t\":{t},\"channel\":\"Alpha1\",\"value\":{}}}\n",
                51.0 + (i % 4) as f64
            ));
        }
        out
    }

    #[test]
    fn parses_well_formed_trace() {
        let cycle = parse_trace(Cursor::new(trace_text(60.0, 60.0, true))).unwrap();
        assert_eq!(cycle.subject_id, "S1");
        assert_eq!(cycle.music_id, "M1");
        assert_eq!(cycle.channels().len(), 2);
        let hr = cycle.baseline_channel(Channel::HeartRate).unwrap();
        assert_eq!(hr.rate, 2.0);
        assert_eq!(hr.len(), 120);
        let hr_stim = cycle.stimulus_channel(Channel::HeartRate).unwrap();
        assert_eq!(hr_stim.len(), 120);
        assert!(cycle.gaps.is_empty());
    }

    #[test]
    fn family_channel_names_parse_as_first_sub_band() {
        let text = trace_text(60.0, 60.0, true).replace("Alpha1", "Alpha");
        let cycle = parse_trace(Cursor::new(text)).unwrap();
        assert!(cycle.baseline_channel(Channel::Alpha1).is_some());
        assert_eq!("Beta".parse::<Channel>().unwrap(), Channel::Beta1);
    }

    #[test]
    fn missing_heart_rate_is_rejected() {
        let err = parse_trace(Cursor::new(trace_text(60.0, 60.0, false))).unwrap_err();
        assert!(matches!(
            err,
            TraceError::MissingChannel(Channel::HeartRate)
        ));
    }

    #[test]
    fn short_baseline_is_rejected() {
        let err = parse_trace(Cursor::new(trace_text(45.0, 60.0, true))).unwrap_err();
        assert!(matches!(err, TraceError::ShortBaseline { .. }));
    }

    #[test]
    fn interior_dropout_becomes_gap() {
        let mut text = trace_text(60.0, 60.0, true);
        // Remove 8 s of Alpha1 baseline (t = 20..28).
        text = text
            .lines()
            .filter(|l| {
                !(l.contains("Alpha1")
                    && (20..28).any(|t| {
                        l.contains(&format!("\"t\":{t}.0,")) || l.contains(&format!("\"t\":{t},"))
                    }))
            })
            .map(|l| format!("{l}\n"))
            .collect();
        let cycle = parse_trace(Cursor::new(text)).unwrap();
        assert_eq!(cycle.gaps.len(), 1);
        let gap = &cycle.gaps[0];
        assert_eq!(gap.channel, Channel::Alpha1);
        assert_eq!(gap.phase, Phase::Baseline);
        assert!((gap.length_s - 8.0).abs() < 1e-9);
        // The filled slots keep the series uniform.
        assert_eq!(cycle.baseline_channel(Channel::Alpha1).unwrap().len(), 60);
    }

    #[test]
    fn round_trip_preserves_cycle() {
        let cycle = simple_cycle(60.0, 60.0);
        let text = serialize_trace(&cycle);
        let parsed = parse_trace(Cursor::new(text)).unwrap();
        assert_eq!(parsed, cycle);
    }

    #[test]
    fn resample_doubles_rate_by_midpoints() {
        let s = hr_series(1.0, vec![60.0, 70.0]);
        let r = resample(&s, 2.0).unwrap();
        assert_eq!(r.values, vec![60.0, 65.0, 70.0]);
        assert_eq!(r.rate, 2.0);
    }

    #[test]
    fn resample_to_same_rate_is_identity() {
        let s = hr_series(2.0, vec![60.0, 61.5, 64.0, 59.0]);
        let r = resample(&s, 2.0).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn resample_halves_rate() {
        let s = hr_series(2.0, vec![60.0, 62.0, 64.0, 66.0]);
        let r = resample(&s, 1.0).unwrap();
        assert_eq!(r.values, vec![60.0, 64.0]);
    }

    #[test]
    fn validate_passes_comfortable_cycle() {
        let cycle = simple_cycle(60.0, 60.0);
        let report = validate_cycle(&cycle, &ValidationConfig::default());
        // Constant 72 BPM baseline is a flatline, so use the stimulus-only checks here.
        assert!(
            report
                .checks
                .iter()
                .find(|c| c.check == ValidationCheck::ComfortBand)
                .unwrap()
                .passed
        );
        assert!(
            report
                .checks
                .iter()
                .find(|c| c.check == ValidationCheck::MaxGap)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn validate_flags_elevated_baseline() {
        let hr_b = hr_series(2.0, (0..120).map(|i| 118.0 + (i % 2) as f64).collect());
        let hr_s = hr_series(2.0, (0..120).map(|i| 118.0 + (i % 3) as f64).collect());
        let a_b = SampleSeries::new(
            Channel::Alpha1,
            1.0,
            (0..60).map(|i| 50.0 + (i % 2) as f64).collect(),
            0.0,
        )
        .unwrap();
        let a_s = SampleSeries::new(
            Channel::Alpha1,
            1.0,
            (0..60).map(|i| 50.0 + (i % 3) as f64).collect(),
            0.0,
        )
        .unwrap();
        let cycle =
            MonitoringCycle::new("S1", "M1", vec![hr_b, a_b], vec![hr_s, a_s], 60.0, vec![])
                .unwrap();
        let report = validate_cycle(&cycle, &ValidationConfig::default());
        let comfort = report
            .checks
            .iter()
            .find(|c| c.check == ValidationCheck::ComfortBand)
            .unwrap();
        assert!(!comfort.passed);
    }

    #[test]
    fn validate_flags_flatline() {
        let mut values: Vec<f64> = (0..120).map(|i| 70.0 + (i % 5) as f64).collect();
        for v in values.iter_mut().take(17) {
            *v = 70.0; // 17 samples at 2 Hz span 8 s
        }
        let hr_b = hr_series(2.0, values);
        let hr_s = hr_series(2.0, (0..120).map(|i| 70.0 + (i % 5) as f64).collect());
        let a_b = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        let a_s = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        let cycle =
            MonitoringCycle::new("S1", "M1", vec![hr_b, a_b], vec![hr_s, a_s], 60.0, vec![])
                .unwrap();
        let report = validate_cycle(&cycle, &ValidationConfig::default());
        let flat = report
            .checks
            .iter()
            .find(|c| c.check == ValidationCheck::Flatline)
            .unwrap();
        assert!(!flat.passed, "{}", flat.detail);
    }

    #[test]
    fn sanitize_trims_to_forty_seconds() {
        let a = simple_cycle(60.0, 60.0);
        let b = simple_cycle(60.0, 60.0);
        let pair = sanitize(&a, &b).unwrap();
        let (hr_r, hr_p) = pair.channel(Channel::HeartRate).unwrap();
        assert_eq!(hr_r.len(), 80);
        assert_eq!(hr_p.len(), 80);
        assert!((hr_r.duration_s() - 40.0).abs() < 1e-9);
        let (a1_r, _) = pair.channel(Channel::Alpha1).unwrap();
        assert_eq!(a1_r.len(), 40);
    }

    #[test]
    fn sanitize_intersects_channels() {
        let mut a = simple_cycle(60.0, 60.0);
        let beta_b = SampleSeries::new(Channel::Beta1, 1.0, vec![40.0; 60], 0.0).unwrap();
        let beta_s = SampleSeries::new(Channel::Beta1, 1.0, vec![40.0; 60], 0.0).unwrap();
        a = MonitoringCycle::new(
            a.subject_id.clone(),
            a.music_id.clone(),
            {
                let mut b = a.baseline.clone();
                b.push(beta_b);
                b
            },
            {
                let mut s = a.stimulus.clone();
                s.push(beta_s);
                s
            },
            60.0,
            vec![],
        )
        .unwrap();
        let b = simple_cycle(60.0, 60.0);
        let pair = sanitize(&a, &b).unwrap();
        let channels = pair.channels();
        assert!(channels.contains(&Channel::HeartRate));
        assert!(channels.contains(&Channel::Alpha1));
        assert!(!channels.contains(&Channel::Beta1));
    }

    #[test]
    fn sanitize_rejects_short_stimulus() {
        let hr_b = hr_series(2.0, vec![72.0; 120]);
        let hr_s = hr_series(2.0, vec![70.0; 50]);
        let a_b = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        let a_s = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 25], 0.0).unwrap();
        let cycle =
            MonitoringCycle::new("S1", "M1", vec![hr_b, a_b], vec![hr_s, a_s], 25.0, vec![])
                .unwrap();
        let err = sanitize_stimulus(&cycle).unwrap_err();
        assert!(matches!(err, TraceError::StimulusTooShort { .. }));
    }

    #[test]
    fn sanitize_aligns_late_starting_series_on_the_timeline() {
        // Probe heart rate starts 1 s late; the kept window must still be
        // [10, 50) on the stimulus timeline, sample-aligned with a
        // full-coverage reference.
        let hr_b = hr_series(2.0, vec![72.0; 120]);
        let hr_s = SampleSeries::new(
            Channel::HeartRate,
            2.0,
            (0..118).map(|i| 60.0 + i as f64).collect(),
            1.0,
        )
        .unwrap();
        let a_b = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        let a_s = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        let cycle =
            MonitoringCycle::new("S1", "M1", vec![hr_b, a_b], vec![hr_s, a_s], 60.0, vec![])
                .unwrap();
        let sanitized = sanitize_stimulus(&cycle).unwrap();
        let hr = sanitized.iter().find(|s| s.channel == Channel::HeartRate).unwrap();
        assert!((hr.start_offset - 10.0).abs() < 1e-9);
        assert_eq!(hr.len(), 80);
        // Sample 18 of the original (t = 1 + 18/2 = 10.0) leads the window.
        assert_eq!(hr.values[0], 60.0 + 18.0);
    }
}

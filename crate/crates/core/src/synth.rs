//! Synthetic subjects, music, and monitoring cycles. Generation is pure in
//! (inputs, seed) with a pinned generator, so fixtures and experiment
//! reports reproduce bit for bit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segment::ChillSegment;
use crate::trace::{
    sanitize, Channel, GapRecord, MonitoringCycle, SampleSeries, TraceError, MIN_BASELINE_S,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("segment [{start_s:.1}, {end_s:.1}] lies outside the {duration_s:.1} s track")]
    SegmentOutsideTrack {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("unknown rng identifier {0:?} (supported: \"chacha8\")")]
    UnknownRng(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Waveform of the heart-rate response during a chill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChillShape {
    /// Constant lift across the response window.
    Plateau,
    /// Rises from 80% to 120% of the lift across the window.
    Ramp,
}

impl ChillShape {
    fn factor(self, progress: f64) -> f64 {
        match self {
            ChillShape::Plateau => 1.0,
            ChillShape::Ramp => 0.8 + 0.4 * progress.clamp(0.0, 1.0),
        }
    }
}

/// A synthetic subject: resting statistics per channel plus how strongly
/// and how quickly they respond to a chill.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub resting_hr_mean: f64,
    pub resting_hr_stdev: f64,
    pub eeg_band_means: BTreeMap<Channel, f64>,
    pub eeg_band_stdevs: BTreeMap<Channel, f64>,
    pub chill_hr_amplitude: f64,
    pub chill_shape: ChillShape,
    pub response_latency_s: f64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(50.0..=100.0).contains(&self.resting_hr_mean) {
            return Err(SynthError::InvalidProfile(format!(
                "resting heart rate {} outside [50, 100]",
                self.resting_hr_mean
            )));
        }
        if self.chill_hr_amplitude <= 2.0 * self.resting_hr_stdev {
            return Err(SynthError::InvalidProfile(format!(
                "chill amplitude {} must exceed twice the resting stdev {}",
                self.chill_hr_amplitude, self.resting_hr_stdev
            )));
        }
        if self.eeg_band_means.is_empty() {
            return Err(SynthError::InvalidProfile("no EEG bands defined".into()));
        }
        for (channel, mean) in &self.eeg_band_means {
            if !channel.is_neurological() {
                return Err(SynthError::InvalidProfile(format!(
                    "{channel} is not a neurological channel"
                )));
            }
            if *mean <= 0.0 || !self.eeg_band_stdevs.contains_key(channel) {
                return Err(SynthError::InvalidProfile(format!(
                    "band {channel} needs a positive mean and a stdev"
                )));
            }
        }
        Ok(())
    }
}

/// A synthetic track: its length and where in it chills tend to happen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MusicProfile {
    pub music_id: String,
    pub duration_s: f64,
    pub chill_regions: Vec<(f64, f64)>,
}

impl MusicProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        for &(start, end) in &self.chill_regions {
            if start < 0.0 || end > self.duration_s || end - start < 5.0 {
                return Err(SynthError::InvalidProfile(format!(
                    "chill region [{start}, {end}] invalid for a {} s track",
                    self.duration_s
                )));
            }
        }
        Ok(())
    }
}

/// Per (subject, music) chill affinity in [0, 1]. Zero means the music never
/// moves the subject; at or above 0.5 the modeled response is strong enough
/// that every listen shows a chill.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AffinityMap {
    map: BTreeMap<String, BTreeMap<String, f64>>,
}

impl AffinityMap {
    pub fn set(&mut self, subject: &str, music: &str, affinity: f64) {
        self.map
            .entry(subject.to_string())
            .or_default()
            .insert(music.to_string(), affinity.clamp(0.0, 1.0));
    }

    pub fn get(&self, subject: &str, music: &str) -> f64 {
        self.map
            .get(subject)
            .and_then(|m| m.get(music))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (s, inner) in &self.map {
            for (m, a) in inner {
                if !(0.0..=1.0).contains(a) {
                    return Err(SynthError::InvalidProfile(format!(
                        "affinity {a} for {s}/{m} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Distortions applied to a generated cycle: multiplicative decay of the
/// chill response amplitude and a coercion-style stress level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub drift_pct: f64,
    pub stress_level: f64,
    pub noise_seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            drift_pct: 0.0,
            stress_level: 0.0,
            noise_seed: 0,
        }
    }
}

/// Model constants for the generator. `rng` names the pinned generator so a
/// config file captures everything needed to regenerate fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub rng: String,
    /// Fractional EEG band lift at affinity 1.
    pub eeg_response_gain: f64,
    /// Noise shrink factor inside a chill response; the dopamine response
    /// dominates sensor noise there.
    pub chill_noise_damping: f64,
    /// Heart-rate elevation at stress level 1, in BPM.
    pub stress_bpm_at_full: f64,
    /// Fractional EEG distortion at stress level 1.
    pub stress_eeg_gain: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            rng: "chacha8".to_string(),
            eeg_response_gain: 0.3,
            chill_noise_damping: 0.1,
            stress_bpm_at_full: 40.0,
            stress_eeg_gain: 1.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.rng != "chacha8" {
            return Err(SynthError::UnknownRng(self.rng.clone()));
        }
        Ok(())
    }
}

/// Stable 64-bit mix of a run seed, a numeric salt, and string parts.
/// FNV-1a over the inputs with a splitmix64 finalizer; used to derive
/// independent, reproducible sub-streams (one per subject/music/purpose).
pub fn mix_seed(seed: u64, salt: u64, parts: &[&str]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x1000_0000_01b3;
    let mut h = FNV_OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    eat(&seed.to_le_bytes());
    eat(&salt.to_le_bytes());
    for part in parts {
        eat(part.as_bytes());
        eat(&[0xff]);
    }
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn stream_seed(seed: u64, noise_seed: u64, subject_id: &str, music_id: &str) -> u64 {
    mix_seed(seed, noise_seed, &[subject_id, music_id])
}

/// Portable Box-Muller draw; two uniforms in, one standard normal out.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// The response window of a chill region on the stimulus timeline:
/// the region shifted by the subject's latency, clipped to the stimulus.
struct ResponseWindow {
    start: f64,
    end: f64,
    region_len: f64,
}

/// Generate one monitoring cycle: a 60-second baseline followed by the
/// stimulus, with chill lifts inside the music's chill regions scaled by
/// affinity and decayed by drift, plus stress distortion when requested.
pub fn synth_cycle(
    cfg: &SimulationConfig,
    subject: &SubjectProfile,
    music: &MusicProfile,
    segment: Option<&ChillSegment>,
    affinity: f64,
    perturb: &PerturbationSpec,
    seed: u64,
) -> Result<MonitoringCycle, SynthError> {
    cfg.validate()?;
    subject.validate()?;
    music.validate()?;

    let (stim_start, stim_duration) = match segment {
        Some(seg) => {
            if seg.start_s < -1e-9 || seg.end_s > music.duration_s + 1e-9 {
                return Err(SynthError::SegmentOutsideTrack {
                    start_s: seg.start_s,
                    end_s: seg.end_s,
                    duration_s: music.duration_s,
                });
            }
            (seg.start_s, seg.duration_s())
        }
        None => (0.0, music.duration_s),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(
        seed,
        perturb.noise_seed,
        &subject.subject_id,
        &music.music_id,
    ));

    let stress = perturb.stress_level.clamp(0.0, 1.0);
    let noise_inflation = 1.0 + 2.0 * stress;
    let stress_bpm = stress * cfg.stress_bpm_at_full;
    let eeg_stress_mult = 1.0 + cfg.stress_eeg_gain * stress;
    let decay = 1.0 - perturb.drift_pct / 100.0;
    let hr_lift = subject.chill_hr_amplitude * affinity * decay;

    // Response windows on the stimulus timeline.
    let windows: Vec<ResponseWindow> = music
        .chill_regions
        .iter()
        .map(|&(rs, re)| ResponseWindow {
            start: rs + subject.response_latency_s - stim_start,
            end: re + subject.response_latency_s - stim_start,
            region_len: re - rs,
        })
        .filter(|w| w.end > 0.0 && w.start < stim_duration)
        .collect();
    let lift_at = |t: f64| -> Option<f64> {
        windows.iter().find_map(|w| {
            if t >= w.start && t <= w.end {
                let progress = (t - w.start) / w.region_len.max(1e-9);
                Some(subject.chill_shape.factor(progress))
            } else {
                None
            }
        })
    };

    // Heart rate at 2 Hz: baseline, then stimulus.
    let hr_sigma = subject.resting_hr_stdev * noise_inflation;
    let n_base_hr = (MIN_BASELINE_S * 2.0) as usize;
    let mut hr_baseline = Vec::with_capacity(n_base_hr);
    for _ in 0..n_base_hr {
        let v = subject.resting_hr_mean + stress_bpm + hr_sigma * standard_normal(&mut rng);
        hr_baseline.push(v.max(0.0));
    }
    let n_stim_hr = (stim_duration * 2.0).round() as usize;
    let mut hr_stimulus = Vec::with_capacity(n_stim_hr);
    for i in 0..n_stim_hr {
        let t = i as f64 / 2.0;
        let (lift, sigma) = match (hr_lift > 0.0).then(|| lift_at(t)).flatten() {
            Some(shape) => (hr_lift * shape, hr_sigma * cfg.chill_noise_damping),
            None => (0.0, hr_sigma),
        };
        let v = subject.resting_hr_mean + stress_bpm + lift + sigma * standard_normal(&mut rng);
        hr_stimulus.push(v.max(0.0));
    }

    let mut baseline = vec![SampleSeries::new(
        Channel::HeartRate,
        2.0,
        hr_baseline,
        0.0,
    )?];
    let mut stimulus = vec![SampleSeries::new(
        Channel::HeartRate,
        2.0,
        hr_stimulus,
        0.0,
    )?];

    // EEG bands at 1 Hz, in channel order for a reproducible draw sequence.
    for (&channel, &band_mean) in &subject.eeg_band_means {
        let band_sigma = subject.eeg_band_stdevs[&channel] * noise_inflation;
        let band_lift = band_mean * cfg.eeg_response_gain * affinity * decay;

        let n_base = MIN_BASELINE_S as usize;
        let mut base_values = Vec::with_capacity(n_base);
        for _ in 0..n_base {
            let v = (band_mean + band_sigma * standard_normal(&mut rng)) * eeg_stress_mult;
            base_values.push(v.max(0.0));
        }
        let n_stim = stim_duration.round() as usize;
        let mut stim_values = Vec::with_capacity(n_stim);
        for i in 0..n_stim {
            let t = i as f64;
            let (lift, sigma) = match (band_lift > 0.0).then(|| lift_at(t)).flatten() {
                Some(shape) => (band_lift * shape, band_sigma * cfg.chill_noise_damping),
                None => (0.0, band_sigma),
            };
            let v = (band_mean + lift + sigma * standard_normal(&mut rng)) * eeg_stress_mult;
            stim_values.push(v.max(0.0));
        }
        baseline.push(SampleSeries::new(channel, 1.0, base_values, 0.0)?);
        stimulus.push(SampleSeries::new(channel, 1.0, stim_values, 0.0)?);
    }

    Ok(MonitoringCycle::new(
        subject.subject_id.clone(),
        music.music_id.clone(),
        baseline,
        stimulus,
        stim_duration,
        Vec::<GapRecord>::new(),
    )?)
}

/// A whole simulated cohort: who the subjects are, what they listen to, how
/// strongly each piece moves them, which distortions apply, and which pieces
/// serve as each subject's registration candidates and probe stimuli.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Population {
    pub subjects: Vec<SubjectProfile>,
    pub music: Vec<MusicProfile>,
    pub affinities: AffinityMap,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    /// Ordered registration candidates per subject; defaults to that
    /// subject's music sorted by descending affinity.
    #[serde(default)]
    pub music_preferences: BTreeMap<String, Vec<String>>,
    /// The piece played to every subject during the probe round.
    #[serde(default)]
    pub constant_music_id: Option<String>,
    /// The piece only this subject hears during the probe round.
    #[serde(default)]
    pub random_music: BTreeMap<String, String>,
}

impl Population {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::InvalidProfile(format!("population file: {e}")))?;
        let population: Population = serde_json::from_str(&text)
            .map_err(|e| SynthError::InvalidProfile(format!("population file: {e}")))?;
        population.validate()?;
        Ok(population)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), SynthError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SynthError::InvalidProfile(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| SynthError::InvalidProfile(format!("population file: {e}")))
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectProfile> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    pub fn music_profile(&self, id: &str) -> Option<&MusicProfile> {
        self.music.iter().find(|m| m.music_id == id)
    }

    /// Registration candidates for a subject, most preferred first.
    pub fn preferences_for(&self, subject_id: &str) -> Vec<String> {
        if let Some(prefs) = self.music_preferences.get(subject_id) {
            return prefs.clone();
        }
        let mut scored: Vec<(f64, &str)> = self
            .music
            .iter()
            .map(|m| {
                (
                    self.affinities.get(subject_id, &m.music_id),
                    m.music_id.as_str(),
                )
            })
            .filter(|(a, _)| *a > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        scored.into_iter().map(|(_, m)| m.to_string()).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for subject in &self.subjects {
            subject.validate()?;
        }
        for music in &self.music {
            music.validate()?;
        }
        self.affinities.validate()?;
        let known = |id: &str| self.music_profile(id).is_some();
        for (subject, prefs) in &self.music_preferences {
            if self.subject(subject).is_none() {
                return Err(SynthError::InvalidProfile(format!(
                    "unknown subject {subject}"
                )));
            }
            for music in prefs {
                if !known(music) {
                    return Err(SynthError::InvalidProfile(format!("unknown music {music}")));
                }
            }
        }
        if let Some(id) = &self.constant_music_id {
            if !known(id) {
                return Err(SynthError::InvalidProfile(format!(
                    "unknown constant music {id}"
                )));
            }
        }
        for music in self.random_music.values() {
            if !known(music) {
                return Err(SynthError::InvalidProfile(format!(
                    "unknown random music {music}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean pointwise relative difference between two cycles' sanitized
/// responses, averaged over channels, as a percentage.
pub fn percent_difference(
    reference: &MonitoringCycle,
    probe: &MonitoringCycle,
) -> Result<f64, TraceError> {
    let pair = sanitize(reference, probe)?;
    percent_difference_series(&pair.reference, &pair.probe)
}

/// Series-level form of [`percent_difference`], usable against a stored
/// template's reference responses. Channels are matched by name; lengths
/// are truncated to the shorter side.
pub fn percent_difference_series(
    reference: &[SampleSeries],
    probe: &[SampleSeries],
) -> Result<f64, TraceError> {
    let mut per_channel = Vec::new();
    for r in reference {
        let Some(p) = probe.iter().find(|p| p.channel == r.channel) else {
            continue;
        };
        let n = r.values.len().min(p.values.len());
        if n == 0 {
            continue;
        }
        let sum: f64 = r.values[..n]
            .iter()
            .zip(&p.values[..n])
            .map(|(rv, pv)| (pv - rv).abs() / rv.max(1e-9))
            .sum();
        per_channel.push(sum / n as f64);
    }
    if per_channel.is_empty() {
        return Err(TraceError::NoCommonChannels);
    }
    Ok(100.0 * per_channel.iter().sum::<f64>() / per_channel.len() as f64)
}

//! Coefficient-of-difference scoring. Physiology gets a categorical bin
//! test and a penalty test; each neurological band gets a penalty test and
//! four mean-comparison tests. The per-side subroutine scores are averaged,
//! the two sides are summed, and totals at or below the threshold pass.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chill::{baseline_stats, detect_chills, ChillError, DetectorConfig};
use crate::enroll::RegisteredTemplate;
use crate::trace::{
    pair_sanitized, sanitize_stimulus, Channel, MonitoringCycle, SampleSeries, TraceError,
    ValidationConfig,
};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("series lengths differ: reference {reference}, probe {probe}")]
    LengthMismatch { reference: usize, probe: usize },
    #[error("no heart-rate channel shared by template and probe")]
    MissingHeartRate,
    #[error("no neurological channels shared by template and probe")]
    NoNeuroChannels,
    #[error("invalid scoring config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Chill(#[from] ChillError),
}

/// Scoring knobs. The penalty scales are calibrated so that genuine
/// attempts keep each side's coefficient at or below 1.0, which is what
/// makes 2.0 the natural combined threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub bin_width_bpm: f64,
    pub penalty_scale_physio: f64,
    pub penalty_scale_neuro: f64,
    pub mean_scale: f64,
    pub epsilon: f64,
    /// Bands that participate in the neurological score; `None` means every
    /// band shared by template and probe.
    pub neuro_bands: Option<BTreeSet<Channel>>,
    pub threshold: f64,
    pub stress_gate_enabled: bool,
    pub stress_sigma: f64,
    pub require_probe_chill: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            bin_width_bpm: 5.0,
            penalty_scale_physio: 10.0,
            penalty_scale_neuro: 10.0,
            mean_scale: 1.0,
            epsilon: 1e-9,
            neuro_bands: None,
            threshold: 2.0,
            stress_gate_enabled: false,
            stress_sigma: 3.0,
            require_probe_chill: false,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let positive = [
            ("bin_width_bpm", self.bin_width_bpm),
            ("penalty_scale_physio", self.penalty_scale_physio),
            ("penalty_scale_neuro", self.penalty_scale_neuro),
            ("mean_scale", self.mean_scale),
            ("epsilon", self.epsilon),
            ("threshold", self.threshold),
            ("stress_sigma", self.stress_sigma),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(ScoringError::InvalidConfig(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if let Some(bands) = &self.neuro_bands {
            if let Some(ch) = bands.iter().find(|c| !c.is_neurological()) {
                return Err(ScoringError::InvalidConfig(format!(
                    "{ch} is not a neurological channel"
                )));
            }
        }
        Ok(())
    }
}

/// Coefficients from the four mean comparisons of the average test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCoefficients {
    pub rms: f64,
    pub geometric: f64,
    pub harmonic: f64,
    pub arithmetic: f64,
}

impl MeanCoefficients {
    pub fn as_array(&self) -> [f64; 4] {
        [self.rms, self.geometric, self.harmonic, self.arithmetic]
    }
}

/// Per-subroutine and combined coefficients plus the decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientBreakdown {
    pub physio_categorical: f64,
    pub physio_penalty: f64,
    pub physio_total: f64,
    pub neuro_penalty_per_band: BTreeMap<Channel, f64>,
    pub neuro_means_per_band: BTreeMap<Channel, MeanCoefficients>,
    pub neuro_total: f64,
    pub total: f64,
    pub passed: bool,
}

impl CoefficientBreakdown {
    /// Combine subroutine coefficients into totals and the decision:
    /// each side averages its subroutines, the sides are summed, and a
    /// total at or below `threshold` passes.
    pub fn combine(
        physio_categorical: f64,
        physio_penalty: f64,
        neuro_penalty_per_band: BTreeMap<Channel, f64>,
        neuro_means_per_band: BTreeMap<Channel, MeanCoefficients>,
        threshold: f64,
    ) -> Self {
        let physio_total = (physio_categorical + physio_penalty) / 2.0;
        let n_bands = neuro_penalty_per_band.len();
        let neuro_total = if n_bands == 0 {
            0.0
        } else {
            neuro_penalty_per_band
                .iter()
                .map(|(band, penalty)| {
                    let means = neuro_means_per_band[band];
                    let [rms, geo, harm, arith] = means.as_array();
                    (penalty + rms + geo + harm + arith) / 5.0
                })
                .sum::<f64>()
                / n_bands as f64
        };
        let total = physio_total + neuro_total;
        Self {
            physio_categorical,
            physio_penalty,
            physio_total,
            neuro_penalty_per_band,
            neuro_means_per_band,
            neuro_total,
            total,
            passed: total <= threshold,
        }
    }
}

fn check_lengths(reference: &SampleSeries, probe: &SampleSeries) -> Result<(), ScoringError> {
    if reference.values.len() != probe.values.len() {
        return Err(ScoringError::LengthMismatch {
            reference: reference.values.len(),
            probe: probe.values.len(),
        });
    }
    Ok(())
}

/// Categorical bin test: fraction of time indices whose values fall into
/// different `bin_width_bpm`-wide bins. 0 for identical binning, 1 when no
/// index matches.
pub fn physio_categorical(
    reference: &SampleSeries,
    probe: &SampleSeries,
    cfg: &ScoringConfig,
) -> Result<f64, ScoringError> {
    check_lengths(reference, probe)?;
    let bin = |v: f64| (v / cfg.bin_width_bpm).floor();
    let matches = reference
        .values
        .iter()
        .zip(&probe.values)
        .filter(|(r, p)| bin(**r) == bin(**p))
        .count();
    Ok(1.0 - matches as f64 / reference.values.len() as f64)
}

/// Penalty test: scaled mean pointwise relative difference. Grows without
/// bound as the probe drifts from the reference.
pub fn penalty_test(
    reference: &SampleSeries,
    probe: &SampleSeries,
    scale: f64,
    epsilon: f64,
) -> Result<f64, ScoringError> {
    check_lengths(reference, probe)?;
    let sum: f64 = reference
        .values
        .iter()
        .zip(&probe.values)
        .map(|(r, p)| (p - r).abs() / r.max(epsilon))
        .sum();
    Ok(scale * sum / reference.values.len() as f64)
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn geometric_mean(values: &[f64]) -> f64 {
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

fn harmonic_mean(values: &[f64]) -> f64 {
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

fn arithmetic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Average test: relative difference of the root-mean-square, geometric,
/// harmonic, and arithmetic means of probe versus reference. Values are
/// floored at `epsilon` first so the geometric and harmonic means stay
/// defined on zero-valued band powers.
pub fn average_test(
    reference: &SampleSeries,
    probe: &SampleSeries,
    cfg: &ScoringConfig,
) -> MeanCoefficients {
    let floored =
        |s: &SampleSeries| -> Vec<f64> { s.values.iter().map(|v| v.max(cfg.epsilon)).collect() };
    let r = floored(reference);
    let p = floored(probe);
    let coef = |m: fn(&[f64]) -> f64| -> f64 {
        let mr = m(&r);
        cfg.mean_scale * (m(&p) - mr).abs() / mr
    };
    MeanCoefficients {
        rms: coef(rms),
        geometric: coef(geometric_mean),
        harmonic: coef(harmonic_mean),
        arithmetic: coef(arithmetic_mean),
    }
}

/// Score a probe cycle against a registered template: sanitize the probe,
/// intersect channels, run every subroutine, and combine.
pub fn coefficient_of_difference(
    template: &RegisteredTemplate,
    probe_cycle: &MonitoringCycle,
    cfg: &ScoringConfig,
) -> Result<CoefficientBreakdown, ScoringError> {
    let probe = sanitize_stimulus(probe_cycle)?;
    let pair = pair_sanitized(template.reference_responses.clone(), probe)?;

    let (hr_ref, hr_probe) = pair
        .channel(Channel::HeartRate)
        .ok_or(ScoringError::MissingHeartRate)?;
    let categorical = physio_categorical(hr_ref, hr_probe, cfg)?;
    let physio_penalty = penalty_test(hr_ref, hr_probe, cfg.penalty_scale_physio, cfg.epsilon)?;

    let mut neuro_penalty_per_band = BTreeMap::new();
    let mut neuro_means_per_band = BTreeMap::new();
    for channel in pair.channels() {
        if !channel.is_neurological() {
            continue;
        }
        if let Some(bands) = &cfg.neuro_bands {
            if !bands.contains(&channel) {
                continue;
            }
        }
        let (r, p) = pair.channel(channel).expect("channel came from the pair");
        let penalty = penalty_test(r, p, cfg.penalty_scale_neuro, cfg.epsilon)?;
        neuro_penalty_per_band.insert(channel, penalty);
        neuro_means_per_band.insert(channel, average_test(r, p, cfg));
    }
    if neuro_penalty_per_band.is_empty() {
        return Err(ScoringError::NoNeuroChannels);
    }

    Ok(CoefficientBreakdown::combine(
        categorical,
        physio_penalty,
        neuro_penalty_per_band,
        neuro_means_per_band,
        cfg.threshold,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StressGateOutcome {
    Pass,
    Reject(String),
}

impl StressGateOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, StressGateOutcome::Pass)
    }
}

/// Pre-scoring anomaly gate: reject when the probe's resting heart rate
/// deviates from the enrolled baseline by more than `stress_sigma` enrolled
/// standard deviations, or leaves the comfort band, both hallmarks of a
/// stressed (possibly coerced) subject. Disabled by default.
pub fn stress_gate(
    template: &RegisteredTemplate,
    probe_cycle: &MonitoringCycle,
    cfg: &ScoringConfig,
    validation: &ValidationConfig,
) -> Result<StressGateOutcome, ScoringError> {
    if !cfg.stress_gate_enabled {
        return Ok(StressGateOutcome::Pass);
    }
    let enrolled = template
        .stats_for(Channel::HeartRate)
        .ok_or(ScoringError::MissingHeartRate)?;
    let probe_baseline = probe_cycle
        .baseline_channel(Channel::HeartRate)
        .ok_or(ScoringError::MissingHeartRate)?;
    let probe_mean = probe_baseline.mean();

    let deviation = (probe_mean - enrolled.mean).abs();
    let limit = cfg.stress_sigma * enrolled.stdev;
    if deviation > limit {
        return Ok(StressGateOutcome::Reject(format!(
            "baseline heart rate {probe_mean:.1} BPM deviates {deviation:.1} from the enrolled {:.1} (limit {limit:.1})",
            enrolled.mean
        )));
    }
    let (lo, hi) = validation.comfort_band;
    if probe_mean < lo || probe_mean > hi {
        return Ok(StressGateOutcome::Reject(format!(
            "baseline heart rate {probe_mean:.1} BPM outside the comfort band [{lo:.0}, {hi:.0}]"
        )));
    }
    Ok(StressGateOutcome::Pass)
}

/// Full authentication decision for one attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuthDecision {
    pub gate: StressGateOutcome,
    pub breakdown: Option<CoefficientBreakdown>,
    /// Whether the probe itself contained a chill, when checked.
    pub probe_chill: Option<bool>,
    pub passed: bool,
}

/// Gate first, then score. When `require_probe_chill` is set, a probe whose
/// sanitized heart rate holds no chill against its own baseline fails even
/// with a passing coefficient.
pub fn authenticate(
    template: &RegisteredTemplate,
    probe_cycle: &MonitoringCycle,
    cfg: &ScoringConfig,
    detector: &DetectorConfig,
    validation: &ValidationConfig,
) -> Result<AuthDecision, ScoringError> {
    let gate = stress_gate(template, probe_cycle, cfg, validation)?;
    if !gate.is_pass() {
        return Ok(AuthDecision {
            gate,
            breakdown: None,
            probe_chill: None,
            passed: false,
        });
    }
    let breakdown = coefficient_of_difference(template, probe_cycle, cfg)?;
    let mut passed = breakdown.passed;
    let probe_chill = if cfg.require_probe_chill {
        let baseline = probe_cycle
            .baseline_channel(Channel::HeartRate)
            .ok_or(ScoringError::MissingHeartRate)?;
        let stats = baseline_stats(baseline)?;
        let sanitized = sanitize_stimulus(probe_cycle)?;
        let hr = sanitized
            .iter()
            .find(|s| s.channel == Channel::HeartRate)
            .ok_or(ScoringError::MissingHeartRate)?;
        let has_chill = !detect_chills(hr, &stats, detector).is_empty();
        passed &= has_chill;
        Some(has_chill)
    } else {
        None
    };
    Ok(AuthDecision {
        gate,
        breakdown: Some(breakdown),
        probe_chill,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hr(values: Vec<f64>) -> SampleSeries {
        SampleSeries::new(Channel::HeartRate, 2.0, values, 10.0).unwrap()
    }

    fn band(values: Vec<f64>) -> SampleSeries {
        SampleSeries::new(Channel::Alpha1, 1.0, values, 10.0).unwrap()
    }

    #[test]
    fn categorical_counts_bin_mismatches() {
        let cfg = ScoringConfig::default();
        let r = hr(vec![72.0, 74.0, 80.0]);
        let p = hr(vec![73.0, 79.0, 81.0]);
        let coef = physio_categorical(&r, &p, &cfg).unwrap();
        assert!((coef - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn categorical_identical_is_zero() {
        let cfg = ScoringConfig::default();
        let r = hr(vec![70.0, 71.0, 75.5, 69.0]);
        assert_eq!(physio_categorical(&r, &r, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn categorical_full_bin_offset_is_one() {
        let cfg = ScoringConfig::default();
        let r = hr(vec![70.0, 75.0, 80.0, 85.0]);
        let p = hr(r.values.iter().map(|v| v + cfg.bin_width_bpm).collect());
        assert_eq!(physio_categorical(&r, &p, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn penalty_is_scaled_mean_relative_difference() {
        let r = hr(vec![60.0, 60.0]);
        let p = hr(vec![66.0, 60.0]);
        let coef = penalty_test(&r, &p, 10.0, 1e-9).unwrap();
        assert!((coef - 0.5).abs() < 1e-12);
    }

    #[test]
    fn penalty_identical_is_zero() {
        let r = hr(vec![60.0, 80.0, 75.0]);
        assert_eq!(penalty_test(&r, &r, 10.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn penalty_is_scale_invariant_in_magnitude() {
        for base in [40.0, 80.0, 160.0] {
            let r = hr(vec![base; 8]);
            let p = hr(vec![base * 1.01; 8]);
            let coef = penalty_test(&r, &p, 10.0, 1e-9).unwrap();
            assert!((coef - 0.1).abs() < 1e-9, "base {base}: {coef}");
        }
    }

    #[test]
    fn penalty_rejects_length_mismatch() {
        let r = hr(vec![60.0, 60.0]);
        let p = hr(vec![60.0, 60.0, 60.0]);
        assert!(matches!(
            penalty_test(&r, &p, 10.0, 1e-9),
            Err(ScoringError::LengthMismatch {
                reference: 2,
                probe: 3
            })
        ));
    }

    #[test]
    fn four_means_closed_form() {
        let values = vec![1.0, 2.0, 4.0];
        assert!((arithmetic_mean(&values) - 7.0 / 3.0).abs() < 1e-12);
        assert!((geometric_mean(&values) - 2.0).abs() < 1e-12);
        assert!((harmonic_mean(&values) - 12.0 / 7.0).abs() < 1e-12);
        assert!((rms(&values) - (7.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn average_test_identical_is_zero() {
        let cfg = ScoringConfig::default();
        let r = band(vec![3.0, 9.0, 27.0]);
        let m = average_test(&r, &r, &cfg);
        assert_eq!(m.as_array(), [0.0; 4]);
    }

    #[test]
    fn average_test_relative_shift() {
        let cfg = ScoringConfig::default();
        let r = band(vec![100.0; 10]);
        let p = band(vec![110.0; 10]);
        let m = average_test(&r, &p, &cfg);
        for c in m.as_array() {
            assert!((c - 0.10).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_inequality_on_random_positive_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..120);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..500.0)).collect();
            let (h, g, a, r) = (
                harmonic_mean(&values),
                geometric_mean(&values),
                arithmetic_mean(&values),
                rms(&values),
            );
            assert!(h <= g + 1e-12 && g <= a + 1e-12 && a <= r + 1e-12);
        }
    }

    #[test]
    fn combine_threshold_boundary() {
        let bands = |v: f64| {
            let mut p = BTreeMap::new();
            let mut m = BTreeMap::new();
            p.insert(Channel::Alpha1, v);
            m.insert(
                Channel::Alpha1,
                MeanCoefficients {
                    rms: v,
                    geometric: v,
                    harmonic: v,
                    arithmetic: v,
                },
            );
            (p, m)
        };
        // physio (1, 1) -> 1.0; every neuro subroutine 1.0 -> 1.0; total 2.0.
        let (p, m) = bands(1.0);
        let exact = CoefficientBreakdown::combine(1.0, 1.0, p, m, 2.0);
        assert_eq!(exact.total, 2.0);
        assert!(exact.passed);

        let (p, m) = bands(1.0);
        let over = CoefficientBreakdown::combine(1.0, 1.0 + 2e-6, p, m, 2.0);
        assert!(over.total > 2.0);
        assert!(!over.passed);
    }

    fn template_with_baseline(mean: f64, stdev: f64) -> RegisteredTemplate {
        use crate::chill::BaselineStats;
        use crate::segment::{ChillSegment, SegmentSource};
        RegisteredTemplate {
            subject_id: "S1".into(),
            music_id: "M1".into(),
            segment: ChillSegment {
                music_id: "M1".into(),
                start_s: 0.0,
                end_s: 60.0,
                source: SegmentSource::Auto,
            },
            reference_responses: vec![hr(vec![70.0; 80])],
            baseline_stats: vec![BaselineStats {
                channel: Channel::HeartRate,
                mean,
                stdev,
                sample_count: 120,
            }],
            registered_at: 0,
        }
    }

    fn probe_with_baseline_mean(mean: f64) -> crate::trace::MonitoringCycle {
        let hr_b = SampleSeries::new(
            Channel::HeartRate,
            2.0,
            (0..120)
                .map(|i| mean + if i % 2 == 0 { 0.5 } else { -0.5 })
                .collect(),
            0.0,
        )
        .unwrap();
        let hr_s = SampleSeries::new(Channel::HeartRate, 2.0, vec![mean; 120], 0.0).unwrap();
        let a_b = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        let a_s = SampleSeries::new(Channel::Alpha1, 1.0, vec![50.0; 60], 0.0).unwrap();
        crate::trace::MonitoringCycle::new(
            "S1",
            "M1",
            vec![hr_b, a_b],
            vec![hr_s, a_s],
            60.0,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn stress_gate_rejects_large_baseline_deviation() {
        let mut cfg = ScoringConfig {
            stress_gate_enabled: true,
            ..Default::default()
        };
        let validation = crate::trace::ValidationConfig::default();
        let template = template_with_baseline(65.0, 3.0);

        // Deviation 25 > 3 sigma * 3 = 9.
        let stressed = probe_with_baseline_mean(90.0);
        let outcome = stress_gate(&template, &stressed, &cfg, &validation).unwrap();
        assert!(
            matches!(outcome, StressGateOutcome::Reject(_)),
            "{outcome:?}"
        );

        // A matching baseline passes.
        let calm = probe_with_baseline_mean(65.0);
        let outcome = stress_gate(&template, &calm, &cfg, &validation).unwrap();
        assert!(outcome.is_pass());

        // Disabled gate always passes, even for the stressed probe.
        cfg.stress_gate_enabled = false;
        let outcome = stress_gate(&template, &stressed, &cfg, &validation).unwrap();
        assert!(outcome.is_pass());
    }

    #[test]
    fn stress_gate_rejects_comfort_band_exit() {
        // Sigma wide enough that only the comfort band can reject.
        let cfg = ScoringConfig {
            stress_gate_enabled: true,
            stress_sigma: 1000.0,
            ..Default::default()
        };
        let validation = crate::trace::ValidationConfig::default();
        let template = template_with_baseline(95.0, 3.0);
        let outcome = stress_gate(
            &template,
            &probe_with_baseline_mean(108.0),
            &cfg,
            &validation,
        )
        .unwrap();
        assert!(matches!(outcome, StressGateOutcome::Reject(_)));
    }

    #[test]
    fn combine_is_monotone_in_components() {
        let mk = |c: f64, pen: f64, band: f64| {
            let mut p = BTreeMap::new();
            let mut m = BTreeMap::new();
            p.insert(Channel::Alpha1, band);
            m.insert(
                Channel::Alpha1,
                MeanCoefficients {
                    rms: band,
                    geometric: band,
                    harmonic: band,
                    arithmetic: band,
                },
            );
            CoefficientBreakdown::combine(c, pen, p, m, 2.0)
        };
        let a = mk(0.9, 1.2, 0.8);
        let b = mk(0.95, 1.4, 0.9);
        assert!(a.total <= b.total);
        if !a.passed {
            assert!(!b.passed);
        }
    }
}

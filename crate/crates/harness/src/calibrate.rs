//! Penalty-scale calibration. Genuine attempts are expected to keep each
//! side's coefficient at or below 1.0; the calibrator binary-searches the
//! largest physiological and neurological penalty scales that hold that
//! expectation at the 95th percentile, which maximizes the margin against
//! impostor attempts.

use cras_core::enroll::RegisteredTemplate;
use cras_core::scoring::{average_test, penalty_test, physio_categorical, ScoringConfig};
use cras_core::synth::{mix_seed, synth_cycle, Population};
use cras_core::trace::{pair_sanitized, sanitize_stimulus, Channel};

use crate::config::HarnessConfig;
use crate::registration::run_registration;
use crate::HarnessError;

const KAPPA_MIN: f64 = 1.0;
const KAPPA_MAX: f64 = 100.0;
const VALID_PROBES_PER_SUBJECT: u64 = 4;

/// Scale-independent ingredients of one attempt's score. Both totals are
/// linear in their penalty scale, so percentiles can be re-evaluated for
/// any candidate scale without re-scoring.
struct AttemptComponents {
    categorical: f64,
    physio_rel: f64,
    neuro_rel_avg: f64,
    neuro_means_avg: f64,
}

impl AttemptComponents {
    fn physio_total(&self, kappa_p: f64) -> f64 {
        (self.categorical + kappa_p * self.physio_rel) / 2.0
    }

    fn neuro_total(&self, kappa_n: f64) -> f64 {
        (kappa_n * self.neuro_rel_avg + self.neuro_means_avg) / 5.0
    }

    fn total(&self, kappa_p: f64, kappa_n: f64) -> f64 {
        self.physio_total(kappa_p) + self.neuro_total(kappa_n)
    }
}

fn components(
    template: &RegisteredTemplate,
    probe: &cras_core::trace::MonitoringCycle,
    cfg: &ScoringConfig,
) -> Result<AttemptComponents, HarnessError> {
    let sanitized = sanitize_stimulus(probe)?;
    let pair = pair_sanitized(template.reference_responses.clone(), sanitized)?;
    let (hr_ref, hr_probe) = pair
        .channel(Channel::HeartRate)
        .ok_or(cras_core::scoring::ScoringError::MissingHeartRate)?;
    let categorical = physio_categorical(hr_ref, hr_probe, cfg)?;
    let physio_rel = penalty_test(hr_ref, hr_probe, 1.0, cfg.epsilon)?;

    let mut rel_sum = 0.0;
    let mut means_sum = 0.0;
    let mut bands = 0usize;
    for channel in pair.channels() {
        if !channel.is_neurological() {
            continue;
        }
        let (r, p) = pair.channel(channel).expect("channel from pair");
        rel_sum += penalty_test(r, p, 1.0, cfg.epsilon)?;
        means_sum += average_test(r, p, cfg).as_array().iter().sum::<f64>();
        bands += 1;
    }
    if bands == 0 {
        return Err(cras_core::scoring::ScoringError::NoNeuroChannels.into());
    }
    Ok(AttemptComponents {
        categorical,
        physio_rel,
        neuro_rel_avg: rel_sum / bands as f64,
        neuro_means_avg: means_sum / bands as f64,
    })
}

/// Nearest-rank percentile.
fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((p * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// Largest kappa in [KAPPA_MIN, KAPPA_MAX] keeping `p95(value(kappa)) <= 1.0`.
fn search_kappa(eval_p95: impl Fn(f64) -> f64) -> Option<f64> {
    if eval_p95(KAPPA_MIN) > 1.0 {
        return None;
    }
    if eval_p95(KAPPA_MAX) <= 1.0 {
        return Some(KAPPA_MAX);
    }
    let (mut lo, mut hi) = (KAPPA_MIN, KAPPA_MAX);
    for _ in 0..60 {
        let mid = (lo + hi) / 2.0;
        if eval_p95(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Calibrate the penalty scales on a synthetic population and return the
/// updated scoring section. Fails with `CalibrationDiverged` when genuine
/// and impostor score distributions cannot be separated.
pub fn calibrate_scales(
    config: &HarnessConfig,
    population: &Population,
    seed: u64,
) -> Result<ScoringConfig, HarnessError> {
    let enrollment = run_registration(config, population, seed)?;
    if enrollment.templates.is_empty() {
        return Err(HarnessError::CalibrationDiverged(
            "no subject enrolled".into(),
        ));
    }

    // Genuine attempts: fresh listens to each subject's own segment.
    let mut valid = Vec::new();
    for template in &enrollment.templates {
        let subject = population.subject(&template.subject_id).ok_or_else(|| {
            HarnessError::InvalidArgument(format!("unknown subject {}", template.subject_id))
        })?;
        let music = population
            .music_profile(&template.music_id)
            .ok_or_else(|| {
                HarnessError::InvalidArgument(format!("unknown music {}", template.music_id))
            })?;
        let affinity = population
            .affinities
            .get(&template.subject_id, &template.music_id);
        for k in 0..VALID_PROBES_PER_SUBJECT {
            let probe = synth_cycle(
                &config.simulation,
                subject,
                music,
                Some(&template.segment),
                affinity,
                &population.perturbation,
                mix_seed(
                    seed,
                    k,
                    &["calibrate-valid", &template.subject_id, &template.music_id],
                ),
            )?;
            valid.push(components(template, &probe, &config.scoring)?);
        }
    }

    // Impostor attempts: every other subject listening to that template's
    // registered segment.
    let mut invalid = Vec::new();
    for template in &enrollment.templates {
        let music = population
            .music_profile(&template.music_id)
            .ok_or_else(|| {
                HarnessError::InvalidArgument(format!("unknown music {}", template.music_id))
            })?;
        for other in &population.subjects {
            if other.subject_id == template.subject_id {
                continue;
            }
            let affinity = population
                .affinities
                .get(&other.subject_id, &template.music_id);
            let probe = synth_cycle(
                &config.simulation,
                other,
                music,
                Some(&template.segment),
                affinity,
                &population.perturbation,
                mix_seed(
                    seed,
                    0,
                    &["calibrate-invalid", &other.subject_id, &template.music_id],
                ),
            )?;
            invalid.push(components(template, &probe, &config.scoring)?);
        }
    }

    let kappa_p = search_kappa(|k| {
        let mut v: Vec<f64> = valid.iter().map(|c| c.physio_total(k)).collect();
        percentile(&mut v, 0.95)
    })
    .ok_or_else(|| {
        HarnessError::CalibrationDiverged(
            "genuine physiological coefficients exceed 1.0 at the minimum scale".into(),
        )
    })?;
    let kappa_n = search_kappa(|k| {
        let mut v: Vec<f64> = valid.iter().map(|c| c.neuro_total(k)).collect();
        percentile(&mut v, 0.95)
    })
    .ok_or_else(|| {
        HarnessError::CalibrationDiverged(
            "genuine neurological coefficients exceed 1.0 at the minimum scale".into(),
        )
    })?;

    // With the chosen scales, impostors must still be distinguishable.
    let mut valid_totals: Vec<f64> = valid.iter().map(|c| c.total(kappa_p, kappa_n)).collect();
    let valid_p95 = percentile(&mut valid_totals, 0.95);
    let mut invalid_totals: Vec<f64> = invalid.iter().map(|c| c.total(kappa_p, kappa_n)).collect();
    let invalid_median = if invalid_totals.is_empty() {
        f64::INFINITY
    } else {
        percentile(&mut invalid_totals, 0.5)
    };
    if invalid_median <= valid_p95 {
        return Err(HarnessError::CalibrationDiverged(format!(
            "impostor median {invalid_median:.3} does not exceed genuine p95 {valid_p95:.3}"
        )));
    }

    let mut scoring = config.scoring.clone();
    scoring.penalty_scale_physio = kappa_p;
    scoring.penalty_scale_neuro = kappa_n;
    Ok(scoring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::demo_population;

    #[test]
    fn calibrated_scales_stay_in_bracket_and_hold_the_expectation() {
        let config = HarnessConfig::default();
        let population = demo_population();
        let scoring = calibrate_scales(&config, &population, 42).unwrap();
        assert!((KAPPA_MIN..=KAPPA_MAX).contains(&scoring.penalty_scale_physio));
        assert!((KAPPA_MIN..=KAPPA_MAX).contains(&scoring.penalty_scale_neuro));

        // Re-check the postcondition with the calibrated config.
        let enrollment = run_registration(&config, &population, 42).unwrap();
        let mut physy = Vec::new();
        for template in &enrollment.templates {
            let subject = population.subject(&template.subject_id).unwrap();
            let music = population.music_profile(&template.music_id).unwrap();
            let affinity = population
                .affinities
                .get(&template.subject_id, &template.music_id);
            for k in 0..VALID_PROBES_PER_SUBJECT {
                let probe = synth_cycle(
                    &config.simulation,
                    subject,
                    music,
                    Some(&template.segment),
                    affinity,
                    &population.perturbation,
                    mix_seed(
                        42,
                        k,
                        &["calibrate-valid", &template.subject_id, &template.music_id],
                    ),
                )
                .unwrap();
                let c = components(template, &probe, &config.scoring).unwrap();
                physy.push(c.physio_total(scoring.penalty_scale_physio));
            }
        }
        let p95 = percentile(&mut physy, 0.95);
        assert!(p95 <= 1.0 + 1e-9, "p95 {p95}");
    }

    #[test]
    fn indistinguishable_subjects_diverge() {
        let config = HarnessConfig::default();
        let mut population = demo_population();
        // Make every subject a clone of S1 (same body, same responses) and
        // give everyone the same affinity for every registered piece, so
        // genuine and impostor score distributions coincide.
        let reference = population.subjects[0].clone();
        for subject in &mut population.subjects[1..] {
            let id = subject.subject_id.clone();
            *subject = reference.clone();
            subject.subject_id = id;
        }
        let subject_ids: Vec<String> = population
            .subjects
            .iter()
            .map(|s| s.subject_id.clone())
            .collect();
        for subject in &subject_ids {
            for m in 1..=5 {
                population.affinities.set(subject, &format!("M{m}"), 0.9);
            }
        }
        let err = calibrate_scales(&config, &population, 42).unwrap_err();
        assert!(matches!(err, HarnessError::CalibrationDiverged(_)), "{err}");
    }
}

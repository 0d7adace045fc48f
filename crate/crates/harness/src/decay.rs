//! Time-decay / day-dependence experiment: synthesize a later-day probe
//! whose responses have drifted by a known percentage, then measure the
//! observed percent difference against the stored template and re-run the
//! authentication decision.

use cras_core::enroll::RegisteredTemplate;
use cras_core::scoring::authenticate;
use cras_core::synth::{mix_seed, percent_difference_series, synth_cycle, Population};
use cras_core::trace::sanitize_stimulus;

use crate::config::HarnessConfig;
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct DecayRow {
    pub subject_id: String,
    pub drift_pct: f64,
    pub percent_difference: f64,
    pub total: Option<f64>,
    pub passed: bool,
}

/// One attempt per drift value, cycling through the enrolled subjects.
/// Day-level drift scales the whole later-day response multiplicatively;
/// the fresh listen contributes its own sensor noise on top.
pub fn run_time_decay(
    config: &HarnessConfig,
    population: &Population,
    templates: &[RegisteredTemplate],
    drift_pcts: &[f64],
    seed: u64,
) -> Result<Vec<DecayRow>, HarnessError> {
    if templates.is_empty() {
        return Err(HarnessError::StoreEmpty("<memory>".into()));
    }
    let mut rows = Vec::with_capacity(drift_pcts.len());
    for (i, &drift_pct) in drift_pcts.iter().enumerate() {
        let template = &templates[i % templates.len()];
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

        let mut probe = synth_cycle(
            &config.simulation,
            subject,
            music,
            Some(&template.segment),
            affinity,
            &population.perturbation,
            mix_seed(
                seed,
                i as u64,
                &["decay", &template.subject_id, &template.music_id],
            ),
        )?;
        let scale = 1.0 + drift_pct / 100.0;
        for series in &mut probe.stimulus {
            for v in &mut series.values {
                *v *= scale;
            }
        }

        let sanitized = sanitize_stimulus(&probe)?;
        let percent_difference =
            percent_difference_series(&template.reference_responses, &sanitized)?;
        let decision = authenticate(
            template,
            &probe,
            &config.scoring,
            &config.detector,
            &config.validation,
        )?;
        rows.push(DecayRow {
            subject_id: template.subject_id.clone(),
            drift_pct,
            percent_difference,
            total: decision.breakdown.map(|b| b.total),
            passed: decision.passed,
        });
    }
    Ok(rows)
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut out = String::from("subject,drift_pct,percent_difference,total,passed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.2},{:.6},{},{}\n",
            r.subject_id,
            r.drift_pct,
            r.percent_difference,
            r.total.map(|t| format!("{t:.6}")).unwrap_or_default(),
            r.passed
        ));
    }
    out
}

//! Drives the registration state machine over synthesized listens: two full
//! listens per candidate piece, automatic segment selection with a manual
//! fallback, and segment verification with the configured retry budget.

use std::collections::BTreeMap;

use cras_core::enroll::{
    build_template, RegisteredTemplate, RegistrationEvent, RegistrationSession, RegistrationState,
};
use cras_core::synth::{mix_seed, synth_cycle, Population, SubjectProfile};
use cras_core::trace::MonitoringCycle;

use crate::config::HarnessConfig;
use crate::HarnessError;

/// Registration results for a whole population. Verification cycles are the
/// exact stimuli stored into each template, kept for self-comparison checks
/// and trace plots.
#[derive(Debug, Clone, Default)]
pub struct EnrollmentOutcome {
    pub templates: Vec<RegisteredTemplate>,
    pub verification_cycles: BTreeMap<String, MonitoringCycle>,
    pub failures: BTreeMap<String, String>,
    pub log: Vec<String>,
}

impl EnrollmentOutcome {
    pub fn template_for(&self, subject_id: &str) -> Option<&RegisteredTemplate> {
        self.templates.iter().find(|t| t.subject_id == subject_id)
    }
}

/// Enroll every subject, walking their candidate music in preference order.
/// Subjects whose every candidate fails land in `failures`.
pub fn run_registration(
    config: &HarnessConfig,
    population: &Population,
    seed: u64,
) -> Result<EnrollmentOutcome, HarnessError> {
    let mut outcome = EnrollmentOutcome::default();
    for subject in &population.subjects {
        match register_subject(config, population, subject, seed)? {
            Some((session, template)) => {
                outcome.log.push(format!(
                    "{}: registered {} segment [{:.1}, {:.1}]",
                    subject.subject_id,
                    template.music_id,
                    template.segment.start_s,
                    template.segment.end_s
                ));
                outcome.verification_cycles.insert(
                    subject.subject_id.clone(),
                    session
                        .verification_cycle()
                        .expect("registered session has a cycle")
                        .clone(),
                );
                outcome.templates.push(template);
            }
            None => {
                let reason = HarnessError::NoChillMusicForSubject {
                    subject: subject.subject_id.clone(),
                }
                .to_string();
                outcome.log.push(reason.clone());
                outcome.failures.insert(subject.subject_id.clone(), reason);
            }
        }
    }
    Ok(outcome)
}

/// One subject's registration: try each candidate piece until one sticks.
fn register_subject(
    config: &HarnessConfig,
    population: &Population,
    subject: &SubjectProfile,
    seed: u64,
) -> Result<Option<(RegistrationSession, RegisteredTemplate)>, HarnessError> {
    let ctx = config.enrollment_context();
    for music_id in population.preferences_for(&subject.subject_id) {
        let Some(music) = population.music_profile(&music_id) else {
            continue;
        };
        let affinity = population.affinities.get(&subject.subject_id, &music_id);
        let mut session = RegistrationSession::new(&subject.subject_id, &music_id, &ctx.policy);

        for listen in 0..ctx.policy.full_listens_required as u64 {
            let cycle = synth_cycle(
                &config.simulation,
                subject,
                music,
                None,
                affinity,
                &population.perturbation,
                mix_seed(
                    seed,
                    listen,
                    &["enroll-full", &subject.subject_id, &music_id],
                ),
            )?;
            session.advance(RegistrationEvent::SubmitFullListen(cycle), &ctx)?;
        }
        if session.state == RegistrationState::RejectedMusic {
            continue;
        }

        let mut attempt: u64 = 0;
        while session.state == RegistrationState::AwaitingSegmentChoice {
            // Prefer the overlap analysis; fall back to a manual pick at the
            // midpoint of the first interval found, then give the music up.
            if session
                .advance(RegistrationEvent::ProposeAuto, &ctx)
                .is_err()
            {
                let point = first_interval_midpoint(&session, &ctx);
                match point {
                    Some(p) => session.advance(RegistrationEvent::ProposeManual(p), &ctx)?,
                    None => {
                        session.advance(RegistrationEvent::GiveUpMusic, &ctx)?;
                        break;
                    }
                }
            }
            let segment = session.candidate_segment.clone().expect("segment proposed");
            let cycle = synth_cycle(
                &config.simulation,
                subject,
                music,
                Some(&segment),
                affinity,
                &population.perturbation,
                mix_seed(
                    seed,
                    attempt,
                    &["enroll-segment", &subject.subject_id, &music_id],
                ),
            )?;
            session.advance(RegistrationEvent::SubmitSegmentListen(cycle), &ctx)?;
            attempt += 1;
        }

        if session.state == RegistrationState::Registered {
            let template = build_template(&session, &ctx.detector)?;
            return Ok(Some((session, template)));
        }
    }
    Ok(None)
}

fn first_interval_midpoint(
    session: &RegistrationSession,
    ctx: &cras_core::enroll::EnrollmentContext,
) -> Option<f64> {
    use cras_core::chill::{baseline_stats, detect_chills};
    use cras_core::trace::Channel;
    let cycle = session.full_listen_cycles.first()?;
    let stats = baseline_stats(cycle.baseline_channel(Channel::HeartRate)?).ok()?;
    let intervals = detect_chills(
        cycle.stimulus_channel(Channel::HeartRate)?,
        &stats,
        &ctx.detector,
    );
    intervals.first().map(|i| (i.start_s + i.end_s) / 2.0)
}

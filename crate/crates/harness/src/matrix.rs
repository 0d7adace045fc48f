//! The authentication-attempt matrix: four probe stimuli per subject (their
//! own segment, another subject's segment, the constant piece, and their
//! random piece), each scored against every enrolled template.

use std::fmt;

use serde::{Deserialize, Serialize};

use cras_core::enroll::RegisteredTemplate;
use cras_core::scoring::{authenticate, StressGateOutcome};
use cras_core::segment::{ChillSegment, SegmentSource};
use cras_core::synth::{mix_seed, synth_cycle, Population};
use cras_core::trace::MonitoringCycle;

use crate::config::HarnessConfig;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttemptCategory {
    ValidAttempt,
    SameUserDifferentMusic,
    DifferentUserRegisteredMusic,
    InvalidAttempt,
}

impl AttemptCategory {
    pub const ALL: [AttemptCategory; 4] = [
        AttemptCategory::ValidAttempt,
        AttemptCategory::SameUserDifferentMusic,
        AttemptCategory::DifferentUserRegisteredMusic,
        AttemptCategory::InvalidAttempt,
    ];

    /// The category is a pure function of subject and music identity.
    pub fn categorize(same_subject: bool, same_music: bool) -> Self {
        match (same_subject, same_music) {
            (true, true) => AttemptCategory::ValidAttempt,
            (true, false) => AttemptCategory::SameUserDifferentMusic,
            (false, true) => AttemptCategory::DifferentUserRegisteredMusic,
            (false, false) => AttemptCategory::InvalidAttempt,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AttemptCategory::ValidAttempt => "valid",
            AttemptCategory::SameUserDifferentMusic => "same_user_different_music",
            AttemptCategory::DifferentUserRegisteredMusic => "different_user_registered_music",
            AttemptCategory::InvalidAttempt => "invalid",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    /// Whether the category counts toward the accuracy metric. Same-user
    /// attempts cannot occur in practice (a genuine user always plays their
    /// registered music), so they are excluded.
    pub fn in_accuracy_metric(self) -> bool {
        !matches!(self, AttemptCategory::SameUserDifferentMusic)
    }
}

impl fmt::Display for AttemptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeKind {
    OwnSegment,
    OtherSegment,
    ConstantMusic,
    RandomMusic,
}

impl ProbeKind {
    pub fn label(self) -> &'static str {
        match self {
            ProbeKind::OwnSegment => "own_segment",
            ProbeKind::OtherSegment => "other_segment",
            ProbeKind::ConstantMusic => "constant_music",
            ProbeKind::RandomMusic => "random_music",
        }
    }
}

/// One probe stimulus: a subject listening to one 60-second segment.
#[derive(Debug, Clone)]
pub struct Probe {
    pub subject_id: String,
    pub music_id: String,
    pub kind: ProbeKind,
    pub cycle: MonitoringCycle,
}

/// Synthesize the probe round: every enrolled subject listens to their own
/// registered segment, the next subject's registered segment, the constant
/// piece, and their random piece. One authentication per minute of stimulus
/// is the physical floor, so each probe is a fresh 60-second cycle.
pub fn build_probes(
    config: &HarnessConfig,
    population: &Population,
    templates: &[RegisteredTemplate],
    seed: u64,
) -> Result<Vec<Probe>, HarnessError> {
    let mut probes = Vec::new();
    for (i, template) in templates.iter().enumerate() {
        let subject_id = template.subject_id.clone();
        let subject = population.subject(&subject_id).ok_or_else(|| {
            HarnessError::InvalidArgument(format!("unknown subject {subject_id}"))
        })?;

        let mut plan: Vec<(ProbeKind, ChillSegment)> = Vec::new();
        plan.push((ProbeKind::OwnSegment, template.segment.clone()));
        if templates.len() > 1 {
            let other = &templates[(i + 1) % templates.len()];
            plan.push((ProbeKind::OtherSegment, other.segment.clone()));
        }
        if let Some(constant_id) = &population.constant_music_id {
            plan.push((
                ProbeKind::ConstantMusic,
                leading_segment(population, constant_id)?,
            ));
        }
        if let Some(random_id) = population.random_music.get(&subject_id) {
            plan.push((
                ProbeKind::RandomMusic,
                leading_segment(population, random_id)?,
            ));
        }

        for (kind, segment) in plan {
            let music = population.music_profile(&segment.music_id).ok_or_else(|| {
                HarnessError::InvalidArgument(format!("unknown music {}", segment.music_id))
            })?;
            let affinity = population.affinities.get(&subject_id, &segment.music_id);
            let cycle = synth_cycle(
                &config.simulation,
                subject,
                music,
                Some(&segment),
                affinity,
                &population.perturbation,
                mix_seed(
                    seed,
                    0,
                    &["probe", kind.label(), &subject_id, &segment.music_id],
                ),
            )?;
            probes.push(Probe {
                subject_id: subject_id.clone(),
                music_id: segment.music_id.clone(),
                kind,
                cycle,
            });
        }
    }
    Ok(probes)
}

/// The first minute of a track, used for the constant and random stimuli.
fn leading_segment(population: &Population, music_id: &str) -> Result<ChillSegment, HarnessError> {
    let music = population
        .music_profile(music_id)
        .ok_or_else(|| HarnessError::InvalidArgument(format!("unknown music {music_id}")))?;
    if music.duration_s < 60.0 {
        return Err(HarnessError::InvalidArgument(format!(
            "music {music_id} is shorter than a segment"
        )));
    }
    Ok(ChillSegment {
        music_id: music_id.to_string(),
        start_s: 0.0,
        end_s: 60.0,
        source: SegmentSource::Manual,
    })
}

/// One scored attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRow {
    pub template_subject: String,
    pub template_music: String,
    pub probe_subject: String,
    pub probe_music: String,
    pub probe_kind: String,
    pub category: AttemptCategory,
    pub stimulus_s: f64,
    pub physio_total: Option<f64>,
    pub neuro_total: Option<f64>,
    pub total: Option<f64>,
    pub gate_rejected: bool,
    pub passed: bool,
}

/// All attempts plus per-category tallies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixReport {
    pub rows: Vec<MatrixRow>,
}

impl MatrixReport {
    pub fn category_counts(&self) -> Vec<(AttemptCategory, usize, usize)> {
        AttemptCategory::ALL
            .into_iter()
            .map(|category| {
                let total = self.rows.iter().filter(|r| r.category == category).count();
                let passed = self
                    .rows
                    .iter()
                    .filter(|r| r.category == category && r.passed)
                    .count();
                (category, passed, total)
            })
            .collect()
    }

    /// Accuracy over the categories that exist in practice: passed valid
    /// attempts plus failed non-valid attempts, over their combined count.
    /// Same-user/different-music attempts are excluded.
    pub fn accuracy(&self) -> f64 {
        let mut correct = 0usize;
        let mut counted = 0usize;
        for row in &self.rows {
            if !row.category.in_accuracy_metric() {
                continue;
            }
            counted += 1;
            let should_pass = row.category == AttemptCategory::ValidAttempt;
            if row.passed == should_pass {
                correct += 1;
            }
        }
        if counted == 0 {
            return 0.0;
        }
        correct as f64 / counted as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "template_subject,template_music,probe_subject,probe_music,probe_kind,category,stimulus_s,physio_total,neuro_total,total,gate,passed\n",
        );
        let fmt_opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.1},{},{},{},{},{}\n",
                r.template_subject,
                r.template_music,
                r.probe_subject,
                r.probe_music,
                r.probe_kind,
                r.category,
                r.stimulus_s,
                fmt_opt(r.physio_total),
                fmt_opt(r.neuro_total),
                fmt_opt(r.total),
                if r.gate_rejected { "rejected" } else { "ok" },
                r.passed,
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 12 {
                return Err(HarnessError::ReportParse(format!(
                    "line {}: expected 12 fields, got {}",
                    i + 1,
                    fields.len()
                )));
            }
            let parse_opt = |s: &str| -> Result<Option<f64>, HarnessError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|e| HarnessError::ReportParse(format!("line {}: {e}", i + 1)))
                }
            };
            rows.push(MatrixRow {
                template_subject: fields[0].to_string(),
                template_music: fields[1].to_string(),
                probe_subject: fields[2].to_string(),
                probe_music: fields[3].to_string(),
                probe_kind: fields[4].to_string(),
                category: AttemptCategory::from_label(fields[5]).ok_or_else(|| {
                    HarnessError::ReportParse(format!("line {}: bad category {}", i + 1, fields[5]))
                })?,
                stimulus_s: fields[6]
                    .parse()
                    .map_err(|e| HarnessError::ReportParse(format!("line {}: {e}", i + 1)))?,
                physio_total: parse_opt(fields[7])?,
                neuro_total: parse_opt(fields[8])?,
                total: parse_opt(fields[9])?,
                gate_rejected: fields[10] == "rejected",
                passed: fields[11] == "true",
            });
        }
        Ok(MatrixReport { rows })
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (category, passed, total) in self.category_counts() {
            if total == 0 {
                continue;
            }
            out.push_str(&format!(
                "{:>34}: {passed:>3}/{total:<3} passed ({:.2}%)\n",
                category.label(),
                100.0 * passed as f64 / total as f64
            ));
        }
        out.push_str(&format!(
            "{:>34}: {:.2}%\n",
            "accuracy",
            100.0 * self.accuracy()
        ));
        out
    }
}

/// Score every probe against every template. Rows are sorted by category,
/// then ascending total coefficient.
pub fn run_matrix(
    config: &HarnessConfig,
    templates: &[RegisteredTemplate],
    probes: &[Probe],
) -> Result<MatrixReport, HarnessError> {
    let mut rows = Vec::with_capacity(templates.len() * probes.len());
    for template in templates {
        for probe in probes {
            let category = AttemptCategory::categorize(
                template.subject_id == probe.subject_id,
                template.music_id == probe.music_id,
            );
            let decision = authenticate(
                template,
                &probe.cycle,
                &config.scoring,
                &config.detector,
                &config.validation,
            )?;
            let gate_rejected = !matches!(decision.gate, StressGateOutcome::Pass);
            let breakdown = decision.breakdown.as_ref();
            rows.push(MatrixRow {
                template_subject: template.subject_id.clone(),
                template_music: template.music_id.clone(),
                probe_subject: probe.subject_id.clone(),
                probe_music: probe.music_id.clone(),
                probe_kind: probe.kind.label().to_string(),
                category,
                stimulus_s: probe.cycle.stimulus_duration,
                physio_total: breakdown.map(|b| b.physio_total),
                neuro_total: breakdown.map(|b| b.neuro_total),
                total: breakdown.map(|b| b.total),
                gate_rejected,
                passed: decision.passed,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.category
            .cmp(&b.category)
            .then(
                a.total
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&b.total.unwrap_or(f64::INFINITY)),
            )
            .then(a.template_subject.cmp(&b.template_subject))
            .then(a.probe_subject.cmp(&b.probe_subject))
            .then(a.probe_music.cmp(&b.probe_music))
    });
    Ok(MatrixReport { rows })
}

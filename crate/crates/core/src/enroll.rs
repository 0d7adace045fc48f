//! Registration flow: music verification over two full listens, segment
//! selection, segment verification, and template persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chill::{
    baseline_stats, detect_chills, is_chill_music, BaselineStats, ChillError, ChillInterval,
    DetectorConfig,
};
use crate::segment::{
    auto_select_segment, manual_select_segment, verify_segment, ChillSegment, SegmentError,
    SEGMENT_LEN_S,
};
use crate::trace::{
    sanitize_stimulus, validate_cycle, Channel, MonitoringCycle, SampleSeries, TraceError,
    ValidationConfig,
};

#[derive(Debug, Error)]
pub enum EnrollError {
    #[error("event {event} is illegal in state {state}")]
    IllegalTransition {
        state: RegistrationState,
        event: String,
    },
    #[error("cycle does not belong to this session: {0}")]
    CycleMismatch(String),
    #[error("cycle failed validation: {0}")]
    ValidationFailed(String),
    #[error("session is not in the Registered state")]
    NotRegistered,
    #[error("sanitized reference responses contain no chill")]
    NoChillInReference,
    #[error("template for {subject}/{music} already exists")]
    DuplicateTemplate { subject: String, music: String },
    #[error("no template stored for {subject}/{music}")]
    NotFound { subject: String, music: String },
    #[error("template file is corrupt: {0}")]
    CorruptTemplate(String),
    #[error(transparent)]
    Chill(#[from] ChillError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("template serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Registration policy: how many full listens gate music verification and
/// how many segment attempts are allowed before the music is abandoned.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrollmentConfig {
    pub full_listens_required: usize,
    pub segment_attempts: u32,
    pub min_overlap_s: f64,
}

impl Default for EnrollmentConfig {
    fn default() -> Self {
        Self {
            full_listens_required: 2,
            segment_attempts: 3,
            min_overlap_s: 5.0,
        }
    }
}

/// Everything `advance` needs to judge cycles.
#[derive(Debug, Clone, Default)]
pub struct EnrollmentContext {
    pub validation: ValidationConfig,
    pub detector: DetectorConfig,
    pub policy: EnrollmentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegistrationState {
    AwaitingFullListens,
    AwaitingSegmentChoice,
    AwaitingSegmentVerification,
    Registered,
    RejectedMusic,
}

impl RegistrationState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            RegistrationState::Registered | RegistrationState::RejectedMusic
        )
    }
}

impl fmt::Display for RegistrationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RegistrationState::AwaitingFullListens => "AwaitingFullListens",
            RegistrationState::AwaitingSegmentChoice => "AwaitingSegmentChoice",
            RegistrationState::AwaitingSegmentVerification => "AwaitingSegmentVerification",
            RegistrationState::Registered => "Registered",
            RegistrationState::RejectedMusic => "RejectedMusic",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
pub enum RegistrationEvent {
    SubmitFullListen(MonitoringCycle),
    ProposeAuto,
    ProposeManual(f64),
    SubmitSegmentListen(MonitoringCycle),
    GiveUpMusic,
}

impl RegistrationEvent {
    fn name(&self) -> &'static str {
        match self {
            RegistrationEvent::SubmitFullListen(_) => "SubmitFullListen",
            RegistrationEvent::ProposeAuto => "ProposeAuto",
            RegistrationEvent::ProposeManual(_) => "ProposeManual",
            RegistrationEvent::SubmitSegmentListen(_) => "SubmitSegmentListen",
            RegistrationEvent::GiveUpMusic => "GiveUpMusic",
        }
    }
}

/// One subject registering one piece of music.
#[derive(Debug, Clone)]
pub struct RegistrationSession {
    pub subject_id: String,
    pub music_id: String,
    pub state: RegistrationState,
    pub full_listen_cycles: Vec<MonitoringCycle>,
    pub candidate_segment: Option<ChillSegment>,
    pub attempts_remaining: u32,
    per_listen_intervals: Vec<Vec<ChillInterval>>,
    verification_cycle: Option<MonitoringCycle>,
}

impl RegistrationSession {
    pub fn new(
        subject_id: impl Into<String>,
        music_id: impl Into<String>,
        policy: &EnrollmentConfig,
    ) -> Self {
        Self {
            subject_id: subject_id.into(),
            music_id: music_id.into(),
            state: RegistrationState::AwaitingFullListens,
            full_listen_cycles: Vec::new(),
            candidate_segment: None,
            attempts_remaining: policy.segment_attempts,
            per_listen_intervals: Vec::new(),
            verification_cycle: None,
        }
    }

    /// The verified segment-playback cycle, available once Registered.
    pub fn verification_cycle(&self) -> Option<&MonitoringCycle> {
        self.verification_cycle.as_ref()
    }

    fn check_cycle(
        &self,
        cycle: &MonitoringCycle,
        ctx: &EnrollmentContext,
    ) -> Result<(), EnrollError> {
        if cycle.subject_id != self.subject_id || cycle.music_id != self.music_id {
            return Err(EnrollError::CycleMismatch(format!(
                "session {}/{}, cycle {}/{}",
                self.subject_id, self.music_id, cycle.subject_id, cycle.music_id
            )));
        }
        let report = validate_cycle(cycle, &ctx.validation);
        if !report.passed() {
            return Err(EnrollError::ValidationFailed(report.summary()));
        }
        Ok(())
    }

    fn illegal(&self, event: &RegistrationEvent) -> EnrollError {
        EnrollError::IllegalTransition {
            state: self.state,
            event: event.name().to_string(),
        }
    }

    /// Apply one registration event. Errors leave the session untouched;
    /// a failed verification is a state change, not an error.
    pub fn advance(
        &mut self,
        event: RegistrationEvent,
        ctx: &EnrollmentContext,
    ) -> Result<(), EnrollError> {
        match (self.state, event) {
            (
                RegistrationState::AwaitingFullListens,
                RegistrationEvent::SubmitFullListen(cycle),
            ) => {
                self.check_cycle(&cycle, ctx)?;
                self.full_listen_cycles.push(cycle);
                if self.full_listen_cycles.len() >= ctx.policy.full_listens_required {
                    let verdict = match is_chill_music(&self.full_listen_cycles, &ctx.detector) {
                        Ok(v) => v,
                        Err(e) => {
                            self.full_listen_cycles.pop();
                            return Err(e.into());
                        }
                    };
                    self.per_listen_intervals = verdict.per_cycle_intervals;
                    self.state = if verdict.verdict {
                        RegistrationState::AwaitingSegmentChoice
                    } else {
                        RegistrationState::RejectedMusic
                    };
                }
                Ok(())
            }
            (RegistrationState::AwaitingSegmentChoice, RegistrationEvent::ProposeAuto) => {
                let track = self.full_listen_cycles[0].stimulus_duration;
                let segment = auto_select_segment(
                    &self.per_listen_intervals,
                    track,
                    ctx.policy.min_overlap_s,
                    &self.music_id,
                    ctx.detector.require_direction_match,
                )?;
                self.candidate_segment = Some(segment);
                self.state = RegistrationState::AwaitingSegmentVerification;
                Ok(())
            }
            (
                RegistrationState::AwaitingSegmentChoice,
                RegistrationEvent::ProposeManual(point_s),
            ) => {
                let track = self.full_listen_cycles[0].stimulus_duration;
                let segment = manual_select_segment(point_s, track, &self.music_id)?;
                self.candidate_segment = Some(segment);
                self.state = RegistrationState::AwaitingSegmentVerification;
                Ok(())
            }
            (
                RegistrationState::AwaitingSegmentVerification,
                RegistrationEvent::SubmitSegmentListen(cycle),
            ) => {
                self.check_cycle(&cycle, ctx)?;
                if (cycle.stimulus_duration - SEGMENT_LEN_S).abs() > 0.5 {
                    return Err(EnrollError::CycleMismatch(format!(
                        "segment listen must cover {SEGMENT_LEN_S} s, got {:.1} s",
                        cycle.stimulus_duration
                    )));
                }
                // The segment is acceptable only if the full stimulus shows a
                // chill AND the chill survives the 10 s edge trim; otherwise
                // the stored reference could not honor the template contract.
                let verified = verify_segment(&cycle, &ctx.detector, &ctx.validation)?
                    && sanitized_chill_present(&cycle, &ctx.detector)?;
                if verified {
                    self.verification_cycle = Some(cycle);
                    self.state = RegistrationState::Registered;
                } else {
                    self.attempts_remaining = self.attempts_remaining.saturating_sub(1);
                    self.candidate_segment = None;
                    self.state = if self.attempts_remaining == 0 {
                        RegistrationState::RejectedMusic
                    } else {
                        RegistrationState::AwaitingSegmentChoice
                    };
                }
                Ok(())
            }
            (state, RegistrationEvent::GiveUpMusic) if !state.is_terminal() => {
                self.state = RegistrationState::RejectedMusic;
                Ok(())
            }
            (_, event) => Err(self.illegal(&event)),
        }
    }
}

fn sanitized_chill_present(
    cycle: &MonitoringCycle,
    detector: &DetectorConfig,
) -> Result<bool, EnrollError> {
    let baseline = cycle
        .baseline_channel(Channel::HeartRate)
        .ok_or(ChillError::MissingHeartRate)?;
    let stats = baseline_stats(baseline)?;
    let sanitized = sanitize_stimulus(cycle)?;
    let hr = sanitized
        .iter()
        .find(|s| s.channel == Channel::HeartRate)
        .ok_or(ChillError::MissingHeartRate)?;
    Ok(!detect_chills(hr, &stats, detector).is_empty())
}

/// The enrolled record: the segment, the sanitized 40-second reference
/// responses from the verification listen, and that listen's baseline
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredTemplate {
    pub subject_id: String,
    pub music_id: String,
    pub segment: ChillSegment,
    pub reference_responses: Vec<SampleSeries>,
    pub baseline_stats: Vec<BaselineStats>,
    pub registered_at: u64,
}

impl RegisteredTemplate {
    pub fn reference_channel(&self, channel: Channel) -> Option<&SampleSeries> {
        self.reference_responses
            .iter()
            .find(|s| s.channel == channel)
    }

    pub fn stats_for(&self, channel: Channel) -> Option<&BaselineStats> {
        self.baseline_stats.iter().find(|s| s.channel == channel)
    }
}

/// Build the template from a Registered session. The reference responses
/// come from the verification listen, since that is exactly the stimulus
/// replayed at authentication time.
pub fn build_template(
    session: &RegistrationSession,
    detector: &DetectorConfig,
) -> Result<RegisteredTemplate, EnrollError> {
    if session.state != RegistrationState::Registered {
        return Err(EnrollError::NotRegistered);
    }
    let cycle = session
        .verification_cycle
        .as_ref()
        .ok_or(EnrollError::NotRegistered)?;
    let segment = session
        .candidate_segment
        .clone()
        .ok_or(EnrollError::NotRegistered)?;

    let reference_responses = sanitize_stimulus(cycle)?;
    let mut stats = Vec::with_capacity(cycle.baseline.len());
    for series in &cycle.baseline {
        let s = baseline_stats(series)?;
        s.require_sufficient()?;
        stats.push(s);
    }

    let hr_stats = stats
        .iter()
        .find(|s| s.channel == Channel::HeartRate)
        .ok_or(ChillError::MissingHeartRate)?;
    let hr_ref = reference_responses
        .iter()
        .find(|s| s.channel == Channel::HeartRate)
        .ok_or(ChillError::MissingHeartRate)?;
    if detect_chills(hr_ref, hr_stats, detector).is_empty() {
        return Err(EnrollError::NoChillInReference);
    }

    let registered_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(RegisteredTemplate {
        subject_id: session.subject_id.clone(),
        music_id: session.music_id.clone(),
        segment,
        reference_responses,
        baseline_stats: stats,
        registered_at,
    })
}

// ---------------------------------------------------------------------------
// Template store
// ---------------------------------------------------------------------------

/// CRC-32 (IEEE) over the canonical template body, used to detect
/// truncated or edited files.
fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

/// Canonical serialization: JSON with sorted object keys, no whitespace.
fn canonical_body(template: &RegisteredTemplate) -> Result<String, EnrollError> {
    let value = serde_json::to_value(template)?;
    Ok(serde_json::to_string(&value)?)
}

/// On-disk template index: one canonical-JSON file per (subject, music),
/// with an embedded `crc32` field over the body.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    root: PathBuf,
}

impl TemplateStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, EnrollError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn template_path(&self, subject: &str, music: &str) -> PathBuf {
        self.root
            .join(subject)
            .join(format!("{music}.template.json"))
    }

    /// Persist a template. Refuses to overwrite an existing enrollment for
    /// the same (subject, music) pair.
    pub fn save(&self, template: &RegisteredTemplate) -> Result<PathBuf, EnrollError> {
        let path = self.template_path(&template.subject_id, &template.music_id);
        if path.exists() {
            return Err(EnrollError::DuplicateTemplate {
                subject: template.subject_id.clone(),
                music: template.music_id.clone(),
            });
        }
        std::fs::create_dir_all(path.parent().expect("template path has a parent"))?;

        let body = canonical_body(template)?;
        let checksum = crc32(body.as_bytes());
        let mut value: serde_json::Value = serde_json::from_str(&body)?;
        value
            .as_object_mut()
            .expect("template body is an object")
            .insert(
                "crc32".to_string(),
                serde_json::Value::String(format!("{checksum:08x}")),
            );

        // O_EXCL create keeps concurrent writers of the same key exclusive.
        let mut file = std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    EnrollError::DuplicateTemplate {
                        subject: template.subject_id.clone(),
                        music: template.music_id.clone(),
                    }
                } else {
                    EnrollError::Io(e)
                }
            })?;
        use std::io::Write;
        file.write_all(serde_json::to_string(&value)?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(path)
    }

    pub fn load(&self, subject: &str, music: &str) -> Result<RegisteredTemplate, EnrollError> {
        let path = self.template_path(subject, music);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                EnrollError::NotFound {
                    subject: subject.to_string(),
                    music: music.to_string(),
                }
            } else {
                EnrollError::Io(e)
            }
        })?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| EnrollError::CorruptTemplate(e.to_string()))?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| EnrollError::CorruptTemplate("not a JSON object".into()))?;
        let stored = object
            .remove("crc32")
            .and_then(|v| v.as_str().map(str::to_string))
            .ok_or_else(|| EnrollError::CorruptTemplate("missing crc32 field".into()))?;
        let body = serde_json::to_string(&value)?;
        let actual = format!("{:08x}", crc32(body.as_bytes()));
        if stored != actual {
            return Err(EnrollError::CorruptTemplate(format!(
                "checksum mismatch: stored {stored}, computed {actual}"
            )));
        }
        let template: RegisteredTemplate = serde_json::from_value(value)
            .map_err(|e| EnrollError::CorruptTemplate(e.to_string()))?;
        Ok(template)
    }

    /// All stored (subject, music) pairs, sorted.
    pub fn list(&self) -> Result<Vec<(String, String)>, EnrollError> {
        let mut out = Vec::new();
        for subject_entry in std::fs::read_dir(&self.root)? {
            let subject_entry = subject_entry?;
            if !subject_entry.file_type()?.is_dir() {
                continue;
            }
            let subject = subject_entry.file_name().to_string_lossy().into_owned();
            for file in std::fs::read_dir(subject_entry.path())? {
                let name = file?.file_name().to_string_lossy().into_owned();
                if let Some(music) = name.strip_suffix(".template.json") {
                    out.push((subject.clone(), music.to_string()));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Load every stored template, sorted by (subject, music).
    pub fn load_all(&self) -> Result<Vec<RegisteredTemplate>, EnrollError> {
        self.list()?
            .into_iter()
            .map(|(s, m)| self.load(&s, &m))
            .collect()
    }
}

/// In-memory index view, mostly for reporting.
pub fn index_templates(
    templates: &[RegisteredTemplate],
) -> BTreeMap<(String, String), &RegisteredTemplate> {
    templates
        .iter()
        .map(|t| ((t.subject_id.clone(), t.music_id.clone()), t))
        .collect()
}

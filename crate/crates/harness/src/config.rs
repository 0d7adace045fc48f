//! The harness configuration file: one JSON document with `validation`,
//! `detector`, `scoring`, and `simulation` sections (plus an optional
//! `enrollment` section for registration policy). Missing sections and
//! fields fall back to the documented defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cras_core::chill::DetectorConfig;
use cras_core::enroll::{EnrollmentConfig, EnrollmentContext};
use cras_core::scoring::ScoringConfig;
use cras_core::synth::SimulationConfig;
use cras_core::trace::ValidationConfig;

use crate::HarnessError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub validation: ValidationConfig,
    pub detector: DetectorConfig,
    pub scoring: ScoringConfig,
    pub simulation: SimulationConfig,
    pub enrollment: EnrollmentConfig,
}

impl HarnessConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let config: HarnessConfig = serde_json::from_str(&text)?;
        config.simulation.validate()?;
        config.scoring.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn enrollment_context(&self) -> EnrollmentContext {
        EnrollmentContext {
            validation: self.validation.clone(),
            detector: self.detector.clone(),
            policy: self.enrollment.clone(),
        }
    }
}

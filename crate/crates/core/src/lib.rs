//! Authentication from neuro-physiological responses to chill-inducing music.
//!
//! The pipeline: parse or synthesize monitoring cycles ([`trace`]), detect
//! chill excursions against a per-cycle baseline ([`chill`]), pick the
//! one-minute stimulus segment ([`segment`]), drive the registration state
//! machine and persist templates ([`enroll`]), and score authentication
//! attempts with the coefficient of difference ([`scoring`]). [`synth`]
//! generates reproducible synthetic subjects so the whole flow can be
//! exercised without sensors.

pub mod chill;
pub mod enroll;
pub mod scoring;
pub mod segment;
pub mod synth;
pub mod trace;

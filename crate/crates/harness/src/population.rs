//! The built-in five-subject demo population: five subjects with distinct
//! resting physiology and band-power signatures, one chill piece each, a
//! constant piece every subject hears, and one random piece per subject.

use std::collections::BTreeMap;

use cras_core::synth::{
    AffinityMap, ChillShape, MusicProfile, PerturbationSpec, Population, SubjectProfile,
};
use cras_core::trace::Channel;

const BANDS: [Channel; 8] = [
    Channel::Alpha1,
    Channel::Alpha2,
    Channel::Beta1,
    Channel::Beta2,
    Channel::Gamma1,
    Channel::Gamma2,
    Channel::Delta,
    Channel::Theta,
];

const BAND_BASE: [f64; 8] = [65.0, 55.0, 45.0, 38.0, 30.0, 24.0, 95.0, 80.0];

/// Per-subject band signature: a global power scale plus a +/- pattern per
/// band. Row patterns differ pairwise in exactly half the bands, which keeps
/// any two subjects' band profiles far apart.
const BAND_SIGNS: [[f64; 8]; 5] = [
    [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
    [-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0],
];

const GLOBAL_SCALE: [f64; 5] = [0.70, 0.85, 1.00, 1.15, 1.30];
const SIGN_SPREAD: f64 = 0.45;
const BAND_NOISE_FRACTION: f64 = 0.02;

fn demo_subject(index: usize) -> SubjectProfile {
    let hr_means = [58.0, 66.0, 74.0, 82.0, 90.0];
    let hr_stdevs = [1.4, 1.5, 1.6, 1.5, 1.4];
    let amplitudes = [10.0, 11.0, 12.0, 11.0, 10.0];
    let latencies = [0.5, 1.0, 1.5, 1.0, 0.5];
    let shapes = [
        ChillShape::Plateau,
        ChillShape::Ramp,
        ChillShape::Plateau,
        ChillShape::Ramp,
        ChillShape::Plateau,
    ];

    let mut means = BTreeMap::new();
    let mut stdevs = BTreeMap::new();
    for (b, channel) in BANDS.iter().enumerate() {
        let mean = BAND_BASE[b] * GLOBAL_SCALE[index] * (1.0 + SIGN_SPREAD * BAND_SIGNS[index][b]);
        means.insert(*channel, mean);
        stdevs.insert(*channel, mean * BAND_NOISE_FRACTION);
    }
    SubjectProfile {
        subject_id: format!("S{}", index + 1),
        resting_hr_mean: hr_means[index],
        resting_hr_stdev: hr_stdevs[index],
        eeg_band_means: means,
        eeg_band_stdevs: stdevs,
        chill_hr_amplitude: amplitudes[index],
        chill_shape: shapes[index],
        response_latency_s: latencies[index],
    }
}

/// The default experiment cohort: five subjects, each with one piece of
/// chill music (affinity 0.9), plus the shared constant piece and five
/// random pieces nobody responds to.
pub fn demo_population() -> Population {
    let subjects: Vec<SubjectProfile> = (0..5).map(demo_subject).collect();

    let mut music = vec![
        MusicProfile {
            music_id: "M1".into(),
            duration_s: 240.0,
            chill_regions: vec![(100.0, 118.0)],
        },
        MusicProfile {
            music_id: "M2".into(),
            duration_s: 240.0,
            chill_regions: vec![(60.0, 74.0)],
        },
        MusicProfile {
            music_id: "M3".into(),
            duration_s: 250.0,
            chill_regions: vec![(130.0, 150.0)],
        },
        MusicProfile {
            music_id: "M4".into(),
            duration_s: 250.0,
            chill_regions: vec![(40.0, 58.0), (170.0, 182.0)],
        },
        MusicProfile {
            music_id: "M5".into(),
            duration_s: 260.0,
            chill_regions: vec![(196.0, 214.0)],
        },
        MusicProfile {
            music_id: "RAIN".into(),
            duration_s: 180.0,
            chill_regions: vec![(55.0, 70.0)],
        },
    ];
    for i in 1..=5 {
        music.push(MusicProfile {
            music_id: format!("R{i}"),
            duration_s: 200.0,
            chill_regions: vec![(80.0, 95.0)],
        });
    }

    let mut affinities = AffinityMap::default();
    let mut preferences = BTreeMap::new();
    let mut random_music = BTreeMap::new();
    for (i, subject) in subjects.iter().enumerate() {
        let own_music = format!("M{}", i + 1);
        affinities.set(&subject.subject_id, &own_music, 0.9);
        preferences.insert(subject.subject_id.clone(), vec![own_music]);
        random_music.insert(subject.subject_id.clone(), format!("R{}", i + 1));
    }

    Population {
        subjects,
        music,
        affinities,
        perturbation: PerturbationSpec::default(),
        music_preferences: preferences,
        constant_music_id: Some("RAIN".into()),
        random_music,
    }
}

//! Shared fixtures for the criterion benches.

use pulsecancel_core::harness::ScenarioFamily;
use pulsecancel_core::preprocess::preprocess;
use pulsecancel_core::scenario::synthesize_radar_cube;
use pulsecancel_core::{PhaseSignal, PreprocessConfig, RadarCube};

/// Masking-family cube of `duration` seconds, seed 0.
pub fn masking_cube(duration: f64) -> RadarCube {
    let s = ScenarioFamily::Masking.scenario(0, duration);
    synthesize_radar_cube(&s).expect("masking scenario is valid")
}

pub fn masking_phase(duration: f64) -> PhaseSignal {
    preprocess(&masking_cube(duration), &PreprocessConfig::default())
        .expect("target is in the gate")
}

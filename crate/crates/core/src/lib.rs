//! Heart-rate estimation from FMCW radar slow-time phase.
//!
//! The processing chain cancels respiration before estimating heart rate:
//!
//! 1. [`preprocess`]: range FFT, static clutter removal, target-bin
//!    detection, arctangent demodulation and multi-bin phase enhancement.
//! 2. [`anls`]: grid-searched nonlinear least squares reconstruction of the
//!    breathing fundamental and its low-order harmonics.
//! 3. [`eca`]: projection of the phase onto the orthogonal complement of the
//!    lagged respiration reference.
//! 4. [`spectral`] + [`ahet`]: windowed spectra and the harmonic-credibility
//!    tracker that pairs fundamental heart-rate peaks with their second
//!    harmonic.
//!
//! [`scenario`] is a physics simulator that produces radar cubes with known
//! ground truth, and [`harness`] measures trace accuracy and runtime over
//! seeded Monte Carlo families.

// NaN must fail the `!(x <= limit)` checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ahet;
pub mod anls;
pub mod eca;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod preprocess;
pub mod radar;
pub mod scenario;
pub mod spectral;
pub mod trace;

pub use ahet::{AhetConfig, TrackerState};
pub use anls::{AnlsConfig, FrequencyGrid, HarmonicModel};
pub use eca::EcaConfig;
pub use error::{Error, Result};
pub use pipeline::{Method, PipelineConfig};
pub use preprocess::{PhaseSignal, PreprocessConfig, RangeProfiles};
pub use radar::{RadarConfig, RadarCube};
pub use scenario::{DisplacementSignal, Scenario};
pub use spectral::{Spectrum, Taper};
pub use trace::{HrTrace, Tag, TraceEntry};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn hz_to_bpm(hz: f64) -> f64 {
    hz * 60.0
}

pub fn bpm_to_hz(bpm: f64) -> f64 {
    bpm / 60.0
}

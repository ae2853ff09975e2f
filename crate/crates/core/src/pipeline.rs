//! Sliding-window heart-rate tracking over a phase signal.
//!
//! Per window the ECA methods reconstruct the respiration reference, cancel
//! it, and take a spectrum of what is left; the conventional baseline takes
//! the spectrum of the raw phase. Spectra are computed in parallel, then fed
//! to the tracker in window order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ahet::{conventional_hr, AhetConfig, AhetTracker};
use crate::anls::{reference_with, AnlsConfig, BreathingTrack, HarmonicFitter, Reference};
use crate::eca::{eca_cancel, lag_matrix, EcaConfig, EcaOutput};
use crate::error::{invalid, Error, Result};
use crate::hz_to_bpm;
use crate::preprocess::{preprocess, PhaseSignal, PreprocessConfig};
use crate::radar::RadarCube;
use crate::spectral::{SpectralEstimator, Spectrum, Taper};
use crate::trace::{HrTrace, Tag, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Strongest peak of the raw phase spectrum.
    Conventional,
    /// Strongest peak after respiration cancellation.
    EcaConventional,
    /// Cancellation followed by the harmonic-credibility tracker.
    Ahet,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Conventional, Method::EcaConventional, Method::Ahet];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Conventional => "conventional",
            Method::EcaConventional => "eca-conventional",
            Method::Ahet => "ahet",
        }
    }

    pub fn uses_eca(self) -> bool {
        !matches!(self, Method::Conventional)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid("method", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cpi_s: f64,
    pub step_s: f64,
    pub zero_pad_factor: usize,
    pub taper: Taper,
    pub preprocess: PreprocessConfig,
    pub anls: AnlsConfig,
    pub eca: EcaConfig,
    pub ahet: AhetConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cpi_s: 20.0,
            step_s: 1.0,
            zero_pad_factor: 8,
            taper: Taper::Hann,
            preprocess: PreprocessConfig::default(),
            anls: AnlsConfig::default(),
            eca: EcaConfig::default(),
            ahet: AhetConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_cpi(mut self, cpi_s: f64) -> Self {
        self.cpi_s = cpi_s;
        self
    }
}

/// Window geometry in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Windows {
    pub len: usize,
    pub step: usize,
    pub starts: Vec<usize>,
    pub fs: f64,
}

impl Windows {
    pub fn new(samples: usize, fs: f64, cpi_s: f64, step_s: f64) -> Result<Self> {
        let len = (cpi_s * fs).round() as usize;
        let step = (step_s * fs).round() as usize;
        if len == 0 || step == 0 {
            return Err(invalid("cpi/step", "must span at least one sample"));
        }
        if samples < len {
            return Err(invalid(
                "cpi",
                format!(
                    "{cpi_s} s window exceeds the {} s record",
                    samples as f64 / fs
                ),
            ));
        }
        let starts = (0..=samples - len).step_by(step).collect();
        Ok(Self {
            len,
            step,
            starts,
            fs,
        })
    }

    /// Window centre in seconds.
    pub fn centre(&self, start: usize) -> f64 {
        (start as f64 + 0.5 * self.len as f64) / self.fs
    }
}

/// Respiration-cancelled phase of one window.
#[derive(Debug, Clone)]
pub struct Cancelled {
    pub reference: Reference,
    pub eca: EcaOutput,
}

/// Cancels respiration in `phase[start .. start + len]` using sub-window
/// estimates from `track`. The fitted phase offset is removed before the
/// projection.
pub fn cancel_window(
    phase: &PhaseSignal,
    start: usize,
    len: usize,
    track: &BreathingTrack,
    config: &PipelineConfig,
) -> Result<Cancelled> {
    let mut fitter = HarmonicFitter::new(len, phase.sample_rate, config.anls.order);
    cancel_with(&mut fitter, phase, start, track, config)
}

fn cancel_with(
    fitter: &mut HarmonicFitter,
    phase: &PhaseSignal,
    start: usize,
    track: &BreathingTrack,
    config: &PipelineConfig,
) -> Result<Cancelled> {
    let len = fitter.len();
    let reference = reference_with(fitter, phase, start, track)?;
    let offset = reference.model.offset;
    let theta: Vec<f64> = phase.samples[start..start + len]
        .iter()
        .map(|v| v - offset)
        .collect();
    let x = lag_matrix(&reference.samples, config.eca.order)?;
    let eca = eca_cancel(&theta, &x, &config.eca)?;
    Ok(Cancelled { reference, eca })
}

/// Spectra of one window before and after cancellation.
#[derive(Debug, Clone)]
pub struct WindowSpectra {
    pub start: usize,
    pub time_s: f64,
    pub raw: Option<Spectrum>,
    pub cleaned: Option<Spectrum>,
    pub breathing_hz: Option<f64>,
}

fn window_spectra_with(
    phase: &PhaseSignal,
    windows: &Windows,
    track: Option<&BreathingTrack>,
    want_raw: bool,
    config: &PipelineConfig,
) -> Vec<Result<WindowSpectra>> {
    let fs = phase.sample_rate;
    windows
        .starts
        .par_iter()
        .map_init(
            || {
                let fitter = HarmonicFitter::new(windows.len, fs, config.anls.order);
                (SpectralEstimator::new(), fitter)
            },
            |(est, fitter), &start| {
                let segment = &phase.samples[start..start + windows.len];
                let raw = if want_raw {
                    Some(est.power_spectrum(segment, fs, config.zero_pad_factor, config.taper)?)
                } else {
                    None
                };
                let (cleaned, breathing_hz) = match track {
                    Some(track) => {
                        let c = cancel_with(fitter, phase, start, track, config)?;
                        let s = est.power_spectrum(
                            &c.eca.cleaned,
                            fs,
                            config.zero_pad_factor,
                            config.taper,
                        )?;
                        (Some(s), Some(c.reference.fundamental))
                    }
                    None => (None, None),
                };
                Ok(WindowSpectra {
                    start,
                    time_s: windows.centre(start),
                    raw,
                    cleaned,
                    breathing_hz,
                })
            },
        )
        .collect()
}

/// Raw and cancelled spectra of every window, for export.
pub fn window_spectra(phase: &PhaseSignal, config: &PipelineConfig) -> Result<Vec<WindowSpectra>> {
    let windows = Windows::new(phase.len(), phase.sample_rate, config.cpi_s, config.step_s)?;
    let track = BreathingTrack::estimate(&phase.samples, phase.sample_rate, &config.anls)?;
    window_spectra_with(phase, &windows, Some(&track), true, config)
        .into_iter()
        .collect()
}

/// Heart-rate trace of `phase` with one entry per window. A window whose
/// stages fail repeats the previous estimate tagged `held`; a failure before
/// any estimate exists leaves no entry.
pub fn track(phase: &PhaseSignal, method: Method, config: &PipelineConfig) -> Result<HrTrace> {
    config.eca.validate()?;
    config.ahet.validate()?;
    let windows = Windows::new(phase.len(), phase.sample_rate, config.cpi_s, config.step_s)?;
    let breathing = if method.uses_eca() {
        Some(BreathingTrack::estimate(
            &phase.samples,
            phase.sample_rate,
            &config.anls,
        )?)
    } else {
        None
    };
    let spectra = window_spectra_with(
        phase,
        &windows,
        breathing.as_ref(),
        !method.uses_eca(),
        config,
    );

    let mut trace = HrTrace::default();
    let mut tracker = AhetTracker::new(config.ahet);
    let mut last: Option<f64> = None;
    for (start, window) in windows.starts.iter().zip(spectra) {
        let time_s = windows.centre(*start);
        let estimate = window.and_then(|w| {
            let spectrum = w.cleaned.or(w.raw).expect("one spectrum per window");
            match method {
                Method::Ahet => tracker
                    .step(&spectrum)
                    .map(|e| (e.hr_hz, e.tag, Some(e.delta_hz))),
                _ => conventional_hr(&spectrum, config.ahet.fundamental_band)
                    .map(|f| (f, Tag::Peak, None)),
            }
        });
        match estimate {
            Ok((hz, tag, delta_hz)) => {
                last = Some(hz);
                trace.entries.push(TraceEntry {
                    time_s,
                    hr_bpm: hz_to_bpm(hz),
                    tag,
                    delta_hz,
                });
            }
            Err(_) => {
                trace.failed_windows += 1;
                if let Some(hz) = last {
                    trace.entries.push(TraceEntry {
                        time_s,
                        hr_bpm: hz_to_bpm(hz),
                        tag: Tag::Held,
                        delta_hz: None,
                    });
                }
            }
        }
    }
    trace.h_bar_hz = tracker.state.h_bar;
    Ok(trace)
}

/// AHET trace with the given window, cancellation and tracker settings.
pub fn ahet_trace(
    phase: &PhaseSignal,
    cpi_s: f64,
    step_s: f64,
    eca: EcaConfig,
    ahet: AhetConfig,
) -> Result<HrTrace> {
    let config = PipelineConfig {
        cpi_s,
        step_s,
        eca,
        ahet,
        ..PipelineConfig::default()
    };
    track(phase, Method::Ahet, &config)
}

/// Preprocesses `cube` and tracks the resulting phase.
pub fn run_cube(cube: &RadarCube, method: Method, config: &PipelineConfig) -> Result<HrTrace> {
    let phase = preprocess(cube, &config.preprocess)?;
    track(&phase, method, config)
}

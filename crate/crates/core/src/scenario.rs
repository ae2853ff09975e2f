//! Ground-truth simulator: chest displacement, slow-time phase and raw FMCW
//! cubes generated from a declarative [`Scenario`].
//!
//! Displacement is a breathing harmonic series plus a heartbeat harmonic
//! series plus explicit intermodulation tones (`HR-RR`, `HR+RR`, `HR+2RR` or
//! a fixed frequency). The nominal distance `d_o` is metadata and is not
//! added to the motion samples.
//!
//! Cube synthesis uses the stop-and-hop approximation: the chest is frozen
//! during each chirp at `d_o + d(m T_F)`. The fast-time clock is referenced
//! to the centre of the ADC window, so the carrier phase `4π d / λ` is the
//! phase of the beat tone at mid-window.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::preprocess::PhaseSignal;
use crate::radar::{RadarConfig, RadarCube};
use crate::trace::{HrTrace, Tag, TraceEntry};
use crate::{bpm_to_hz, hz_to_bpm};

/// Physiological breathing band in Hz.
pub const BREATHING_BAND: (f64, f64) = (0.1, 0.5);
/// Physiological heartbeat band in Hz.
pub const HEARTBEAT_BAND: (f64, f64) = (0.7, 2.0);
/// Allowed fundamental breathing amplitude in m, unless overridden.
pub const BREATHING_AMPLITUDE_RANGE: (f64, f64) = (1e-4, 5e-3);
/// Allowed fundamental heartbeat amplitude in m, unless overridden.
pub const HEARTBEAT_AMPLITUDE_RANGE: (f64, f64) = (1e-5, 5e-4);

/// One sinusoid of a harmonic series: amplitude in m, phase in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Harmonic {
    pub fn new(amplitude: f64, phase: f64) -> Self {
        Self { amplitude, phase }
    }
}

/// `order` harmonics with geometric amplitude decay and zero phases.
pub fn geometric_series(fundamental_amplitude: f64, order: usize, decay: f64) -> Vec<Harmonic> {
    (0..order)
        .map(|k| Harmonic::new(fundamental_amplitude * decay.powi(k as i32), 0.0))
        .collect()
}

/// Frequency rule of an intermodulation tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToneRule {
    HrMinusRr,
    HrPlusRr,
    HrPlus2Rr,
    Explicit(f64),
}

impl ToneRule {
    pub fn resolve(self, breathing_hz: f64, heartbeat_hz: f64) -> f64 {
        match self {
            ToneRule::HrMinusRr => heartbeat_hz - breathing_hz,
            ToneRule::HrPlusRr => heartbeat_hz + breathing_hz,
            ToneRule::HrPlus2Rr => heartbeat_hz + 2.0 * breathing_hz,
            ToneRule::Explicit(f) => f,
        }
    }
}

/// Time window during which a tone is present, with raised-cosine edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub end_s: Option<f64>,
    #[serde(default)]
    pub ramp_s: f64,
}

impl Gate {
    pub fn envelope(&self, t: f64) -> f64 {
        let end = self.end_s.unwrap_or(f64::INFINITY);
        if t < self.start_s || t > end {
            return 0.0;
        }
        if self.ramp_s <= 0.0 {
            return 1.0;
        }
        let edge = (t - self.start_s).min(end - t);
        if edge >= self.ramp_s {
            1.0
        } else {
            0.5 - 0.5 * (PI * edge / self.ramp_s).cos()
        }
    }
}

/// Explicit intermodulation tone in the displacement domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ToneSpec", into = "ToneSpec")]
pub struct IntermodTone {
    pub rule: ToneRule,
    pub amplitude: f64,
    pub phase: f64,
    pub gate: Option<Gate>,
}

impl IntermodTone {
    pub fn new(rule: ToneRule, amplitude: f64, phase: f64) -> Self {
        Self {
            rule,
            amplitude,
            phase,
            gate: None,
        }
    }

    pub fn gated(mut self, gate: Gate) -> Self {
        self.gate = Some(gate);
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ToneSpec {
    rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bpm: Option<f64>,
    amplitude: f64,
    #[serde(default)]
    phase: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gate: Option<Gate>,
}

impl TryFrom<ToneSpec> for IntermodTone {
    type Error = Error;

    fn try_from(s: ToneSpec) -> Result<Self> {
        let rule = match s.rule.to_ascii_lowercase().as_str() {
            "hr-rr" => ToneRule::HrMinusRr,
            "hr+rr" => ToneRule::HrPlusRr,
            "hr+2rr" => ToneRule::HrPlus2Rr,
            "explicit" => ToneRule::Explicit(hz_or_bpm("tone", s.hz, s.bpm)?),
            other => return Err(invalid("rule", format!("unknown tone rule `{other}`"))),
        };
        Ok(Self {
            rule,
            amplitude: s.amplitude,
            phase: s.phase,
            gate: s.gate,
        })
    }
}

impl From<IntermodTone> for ToneSpec {
    fn from(t: IntermodTone) -> Self {
        let (rule, hz) = match t.rule {
            ToneRule::HrMinusRr => ("hr-rr", None),
            ToneRule::HrPlusRr => ("hr+rr", None),
            ToneRule::HrPlus2Rr => ("hr+2rr", None),
            ToneRule::Explicit(f) => ("explicit", Some(f)),
        };
        Self {
            rule: rule.to_string(),
            hz,
            bpm: None,
            amplitude: t.amplitude,
            phase: t.phase,
            gate: t.gate,
        }
    }
}

fn hz_or_bpm(name: &'static str, hz: Option<f64>, bpm: Option<f64>) -> Result<f64> {
    match (hz, bpm) {
        (Some(h), None) => Ok(h),
        (None, Some(b)) => Ok(bpm_to_hz(b)),
        (Some(_), Some(_)) => Err(invalid(name, "give the frequency in Hz or BPM, not both")),
        (None, None) => Err(invalid(name, "missing frequency")),
    }
}

/// Static reflector (range in m, linear amplitude).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterPath {
    pub range: f64,
    pub amplitude: f64,
}

/// Full generative description of one subject and radar session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile")]
pub struct Scenario {
    pub radar: RadarConfig,
    /// `d_o` in m.
    pub nominal_distance: f64,
    /// Reflection amplitude of the chest.
    pub target_amplitude: f64,
    pub breathing_fundamental: f64,
    pub breathing_harmonics: Vec<Harmonic>,
    pub heartbeat_fundamental: f64,
    pub heartbeat_harmonics: Vec<Harmonic>,
    pub intermod_tones: Vec<IntermodTone>,
    pub clutter_paths: Vec<ClutterPath>,
    /// White phase jitter per chirp, rad.
    pub phase_noise_std: f64,
    /// Circular complex noise std (total power) per sample.
    pub complex_noise_std: f64,
    pub duration: f64,
    pub seed: u64,
    /// Skips the physiological amplitude range check.
    #[serde(default)]
    pub allow_out_of_range_amplitudes: bool,
}

/// On-disk form: frequencies in Hz or `_bpm`, harmonic series either listed
/// or generated from a fundamental amplitude with geometric decay.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    radar: Option<RadarConfig>,
    #[serde(default = "default_distance")]
    nominal_distance: f64,
    #[serde(default = "one")]
    target_amplitude: f64,
    breathing_fundamental: Option<f64>,
    breathing_fundamental_bpm: Option<f64>,
    breathing_harmonics: Option<Vec<Harmonic>>,
    breathing_amplitude: Option<f64>,
    #[serde(default = "default_breathing_order")]
    breathing_order: usize,
    heartbeat_fundamental: Option<f64>,
    heartbeat_fundamental_bpm: Option<f64>,
    heartbeat_harmonics: Option<Vec<Harmonic>>,
    heartbeat_amplitude: Option<f64>,
    #[serde(default = "default_heartbeat_order")]
    heartbeat_order: usize,
    #[serde(default = "default_decay")]
    harmonic_decay: f64,
    #[serde(default)]
    intermod_tones: Vec<IntermodTone>,
    #[serde(default)]
    clutter_paths: Vec<ClutterPath>,
    #[serde(default)]
    phase_noise_std: f64,
    #[serde(default)]
    complex_noise_std: f64,
    duration: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    allow_out_of_range_amplitudes: bool,
}

fn default_distance() -> f64 {
    1.0
}
fn one() -> f64 {
    1.0
}
fn default_breathing_order() -> usize {
    4
}
fn default_heartbeat_order() -> usize {
    2
}
fn default_decay() -> f64 {
    0.5
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let breathing_fundamental = hz_or_bpm(
            "breathing_fundamental",
            f.breathing_fundamental,
            f.breathing_fundamental_bpm,
        )?;
        let heartbeat_fundamental = hz_or_bpm(
            "heartbeat_fundamental",
            f.heartbeat_fundamental,
            f.heartbeat_fundamental_bpm,
        )?;
        let series =
            |name, listed: Option<Vec<Harmonic>>, amp: Option<f64>, order| match (listed, amp) {
                (Some(l), None) => Ok(l),
                (None, Some(a)) => Ok(geometric_series(a, order, f.harmonic_decay)),
                _ => Err(invalid(
                    name,
                    "give either a harmonic list or a fundamental amplitude",
                )),
            };
        let s = Scenario {
            radar: f.radar.unwrap_or_default(),
            nominal_distance: f.nominal_distance,
            target_amplitude: f.target_amplitude,
            breathing_fundamental,
            breathing_harmonics: series(
                "breathing_harmonics",
                f.breathing_harmonics,
                f.breathing_amplitude,
                f.breathing_order,
            )?,
            heartbeat_fundamental,
            heartbeat_harmonics: series(
                "heartbeat_harmonics",
                f.heartbeat_harmonics,
                f.heartbeat_amplitude,
                f.heartbeat_order,
            )?,
            intermod_tones: f.intermod_tones,
            clutter_paths: f.clutter_paths,
            phase_noise_std: f.phase_noise_std,
            complex_noise_std: f.complex_noise_std,
            duration: f.duration,
            seed: f.seed,
            allow_out_of_range_amplitudes: f.allow_out_of_range_amplitudes,
        };
        s.validate()?;
        Ok(s)
    }
}

impl Scenario {
    /// Quiet subject at 1 m: 4 breathing and 2 heartbeat harmonics with
    /// geometric decay 0.5, no intermodulation, no noise.
    pub fn baseline(breathing_hz: f64, heartbeat_hz: f64, duration: f64) -> Self {
        Self {
            radar: RadarConfig::default(),
            nominal_distance: 1.0,
            target_amplitude: 1.0,
            breathing_fundamental: breathing_hz,
            breathing_harmonics: geometric_series(1e-3, 4, 0.5),
            heartbeat_fundamental: heartbeat_hz,
            heartbeat_harmonics: geometric_series(1e-4, 2, 0.5),
            intermod_tones: Vec::new(),
            clutter_paths: Vec::new(),
            phase_noise_std: 0.0,
            complex_noise_std: 0.0,
            duration,
            seed: 0,
            allow_out_of_range_amplitudes: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Number of slow-time frames in the session.
    pub fn frames(&self) -> usize {
        (self.duration * self.radar.frame_rate()).round() as usize
    }

    pub fn tone_frequency(&self, tone: &IntermodTone) -> f64 {
        tone.rule
            .resolve(self.breathing_fundamental, self.heartbeat_fundamental)
    }

    /// Highest frequency present in the motion model.
    pub fn max_frequency(&self) -> f64 {
        let kb = self.breathing_harmonics.len() as f64 * self.breathing_fundamental;
        let kh = self.heartbeat_harmonics.len() as f64 * self.heartbeat_fundamental;
        self.intermod_tones
            .iter()
            .map(|t| self.tone_frequency(t).abs())
            .fold(kb.max(kh), f64::max)
    }

    /// Largest one-sided motion excursion (sum of amplitudes).
    pub fn max_excursion(&self) -> f64 {
        self.breathing_harmonics
            .iter()
            .chain(&self.heartbeat_harmonics)
            .map(|h| h.amplitude.abs())
            .chain(self.intermod_tones.iter().map(|t| t.amplitude.abs()))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        let (blo, bhi) = BREATHING_BAND;
        if !(blo..=bhi).contains(&self.breathing_fundamental) {
            return Err(invalid(
                "breathing_fundamental",
                format!(
                    "{} Hz outside [{blo}, {bhi}] Hz",
                    self.breathing_fundamental
                ),
            ));
        }
        let (hlo, hhi) = HEARTBEAT_BAND;
        if !(hlo..=hhi).contains(&self.heartbeat_fundamental) {
            return Err(invalid(
                "heartbeat_fundamental",
                format!(
                    "{} Hz outside [{hlo}, {hhi}] Hz",
                    self.heartbeat_fundamental
                ),
            ));
        }
        check_amplitudes("breathing_harmonics", &self.breathing_harmonics)?;
        check_amplitudes("heartbeat_harmonics", &self.heartbeat_harmonics)?;
        for t in &self.intermod_tones {
            if !(t.amplitude.is_finite() && t.amplitude >= 0.0 && t.phase.is_finite()) {
                return Err(invalid(
                    "intermod_tones",
                    "amplitude must be finite and >= 0",
                ));
            }
        }
        if !self.allow_out_of_range_amplitudes {
            in_range(
                "breathing_harmonics",
                &self.breathing_harmonics,
                BREATHING_AMPLITUDE_RANGE,
            )?;
            in_range(
                "heartbeat_harmonics",
                &self.heartbeat_harmonics,
                HEARTBEAT_AMPLITUDE_RANGE,
            )?;
        }
        for (name, v) in [
            ("phase_noise_std", self.phase_noise_std),
            ("complex_noise_std", self.complex_noise_std),
            ("target_amplitude", self.target_amplitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", "must be positive"));
        }
        let samples = self.duration * self.radar.frame_rate();
        if (samples - samples.round()).abs() > 1e-6 {
            return Err(invalid(
                "duration",
                format!("{} s is not a whole number of frames", self.duration),
            ));
        }
        let nyquist = 0.5 * self.radar.frame_rate();
        let fmax = self.max_frequency();
        if fmax >= nyquist {
            return Err(Error::Nyquist {
                what: "scenario motion",
                frequency_hz: fmax,
                nyquist_hz: nyquist,
            });
        }
        if !(self.nominal_distance.is_finite() && self.nominal_distance > 0.0) {
            return Err(invalid("nominal_distance", "must be positive"));
        }
        Ok(())
    }
}

fn check_amplitudes(name: &'static str, series: &[Harmonic]) -> Result<()> {
    if series
        .iter()
        .any(|h| !(h.amplitude.is_finite() && h.amplitude >= 0.0 && h.phase.is_finite()))
    {
        return Err(invalid(name, "amplitudes must be finite and >= 0"));
    }
    Ok(())
}

fn in_range(name: &'static str, series: &[Harmonic], (lo, hi): (f64, f64)) -> Result<()> {
    if let Some(first) = series.first() {
        if !(lo..=hi).contains(&first.amplitude) {
            return Err(invalid(
                name,
                format!(
                    "fundamental amplitude {} m outside [{lo}, {hi}] m",
                    first.amplitude
                ),
            ));
        }
    }
    Ok(())
}

/// Uniformly sampled chest displacement in m, zero-mean motion only.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementSignal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub components: Option<Components>,
}

/// Per-source breakdown of a [`DisplacementSignal`].
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub breathing: Vec<f64>,
    pub heartbeat: Vec<f64>,
    pub intermod: Vec<f64>,
}

fn harmonic_sum(fundamental: f64, series: &[Harmonic], t: f64) -> f64 {
    series
        .iter()
        .enumerate()
        .map(|(k, h)| h.amplitude * (2.0 * PI * (k + 1) as f64 * fundamental * t + h.phase).sin())
        .sum()
}

/// Samples the motion model at `n` points spaced `1/fs` apart.
pub fn synthesize_displacement(
    scenario: &Scenario,
    n: usize,
    fs: f64,
) -> Result<DisplacementSignal> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(invalid(
            "fs",
            format!("sample rate must be positive, got {fs}"),
        ));
    }
    if n < 2 {
        return Err(invalid("n", "need at least 2 samples"));
    }
    check_amplitudes("breathing_harmonics", &scenario.breathing_harmonics)?;
    check_amplitudes("heartbeat_harmonics", &scenario.heartbeat_harmonics)?;
    if scenario
        .intermod_tones
        .iter()
        .any(|t| !t.amplitude.is_finite() || !t.phase.is_finite())
    {
        return Err(invalid("intermod_tones", "non-finite tone"));
    }
    let fmax = scenario.max_frequency();
    if fmax >= 0.5 * fs {
        return Err(Error::Nyquist {
            what: "scenario motion",
            frequency_hz: fmax,
            nyquist_hz: 0.5 * fs,
        });
    }

    let tones: Vec<(f64, &IntermodTone)> = scenario
        .intermod_tones
        .iter()
        .map(|t| (scenario.tone_frequency(t), t))
        .collect();

    let mut breathing = Vec::with_capacity(n);
    let mut heartbeat = Vec::with_capacity(n);
    let mut intermod = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        breathing.push(harmonic_sum(
            scenario.breathing_fundamental,
            &scenario.breathing_harmonics,
            t,
        ));
        heartbeat.push(harmonic_sum(
            scenario.heartbeat_fundamental,
            &scenario.heartbeat_harmonics,
            t,
        ));
        intermod.push(
            tones
                .iter()
                .map(|(f, tone)| {
                    let env = tone.gate.map_or(1.0, |g| g.envelope(t));
                    env * tone.amplitude * (2.0 * PI * f * t + tone.phase).sin()
                })
                .sum(),
        );
    }
    let samples = breathing
        .iter()
        .zip(&heartbeat)
        .zip(&intermod)
        .map(|((b, h), m)| b + h + m)
        .collect();
    Ok(DisplacementSignal {
        samples,
        sample_rate: fs,
        components: Some(Components {
            breathing,
            heartbeat,
            intermod,
        }),
    })
}

/// `θ[n] = (4π / λ_c) d[n]`.
pub fn displacement_to_phase(d: &DisplacementSignal, config: &RadarConfig) -> Result<PhaseSignal> {
    let wl = config.wavelength();
    if !(wl.is_finite() && wl > 0.0) {
        return Err(invalid("carrier_frequency", "wavelength is not finite"));
    }
    let k = 4.0 * PI / wl;
    Ok(PhaseSignal::new(
        d.samples.iter().map(|x| k * x).collect(),
        d.sample_rate,
    ))
}

fn noise(std: f64) -> Option<Normal<f64>> {
    (std > 0.0).then(|| Normal::new(0.0, std).expect("finite std"))
}

/// Unit-amplitude slow-time samples `exp(j(θ + jitter))` plus circular
/// complex noise of total power `complex_noise_std²`.
pub fn synthesize_slow_time(
    theta: &PhaseSignal,
    complex_noise_std: f64,
    phase_noise_std: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    if !(complex_noise_std >= 0.0 && phase_noise_std >= 0.0) {
        return Err(invalid("noise std", "must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = noise(phase_noise_std);
    let awgn = noise(complex_noise_std / 2f64.sqrt());
    Ok(theta
        .samples
        .iter()
        .map(|&th| {
            let j = jitter.map_or(0.0, |d| d.sample(&mut rng));
            let mut z = Complex64::from_polar(1.0, th + j);
            if let Some(d) = awgn {
                z += Complex64::new(d.sample(&mut rng), d.sample(&mut rng));
            }
            z
        })
        .collect())
}

/// Adds `amplitude * exp(j(2π f_IF t_i + 4π r / λ + extra_phase))` over one
/// chirp.
fn add_reflector(
    buf: &mut [Complex64],
    config: &RadarConfig,
    range: f64,
    amplitude: f64,
    extra_phase: f64,
) {
    let n = buf.len();
    let f_if = config.beat_frequency(range);
    let dt = 1.0 / config.adc_sample_rate;
    let centre = 0.5 * (n as f64 - 1.0);
    let carrier = 4.0 * PI * range / config.wavelength() + extra_phase;
    let step = Complex64::from_polar(1.0, 2.0 * PI * f_if * dt);
    let mut z = Complex64::from_polar(amplitude, carrier - 2.0 * PI * f_if * dt * centre);
    for (i, b) in buf.iter_mut().enumerate() {
        // re-anchor periodically so the recurrence does not drift
        if i % 64 == 0 {
            z = Complex64::from_polar(
                amplitude,
                carrier + 2.0 * PI * f_if * dt * (i as f64 - centre),
            );
        }
        *b += z;
        z *= step;
    }
}

/// Raw IF cube for the whole session.
pub fn synthesize_radar_cube(scenario: &Scenario) -> Result<RadarCube> {
    scenario.validate()?;
    let cfg = scenario.radar;
    let frames = scenario.frames();
    let fast = cfg.adc_samples_per_chirp;

    let max_range = cfg.max_unambiguous_range();
    let reach = scenario.nominal_distance + scenario.max_excursion();
    for r in std::iter::once(reach).chain(scenario.clutter_paths.iter().map(|c| c.range)) {
        if r >= max_range || r < 0.0 {
            return Err(Error::BeyondUnambiguousRange {
                range_m: r,
                max_range_m: max_range,
            });
        }
    }

    let motion = synthesize_displacement(scenario, frames, cfg.frame_rate())?;

    let mut clutter = vec![Complex64::default(); fast];
    for c in &scenario.clutter_paths {
        add_reflector(
            &mut clutter,
            &cfg,
            c.range,
            cfg.transmit_power_scale * c.amplitude,
            0.0,
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let jitter = noise(scenario.phase_noise_std);
    let awgn = noise(scenario.complex_noise_std / 2f64.sqrt());
    let amp = cfg.transmit_power_scale * scenario.target_amplitude;

    let mut iq = Vec::with_capacity(frames * fast);
    let mut chirp = vec![Complex64::default(); fast];
    for d in &motion.samples {
        chirp.copy_from_slice(&clutter);
        if amp > 0.0 {
            let range = scenario.nominal_distance + d;
            let j = jitter.map_or(0.0, |g| g.sample(&mut rng));
            add_reflector(&mut chirp, &cfg, range, amp, j);
        }
        if let Some(g) = awgn {
            for c in chirp.iter_mut() {
                *c += Complex64::new(g.sample(&mut rng), g.sample(&mut rng));
            }
        }
        iq.extend_from_slice(&chirp);
    }
    RadarCube::new(frames, fast, iq, cfg)
}

/// Constant-rate ground truth: one entry per analysis window, stamped at the
/// window centre.
pub fn reference_trace(scenario: &Scenario, cpi: f64, step: f64) -> Result<HrTrace> {
    if !(cpi > 0.0 && step > 0.0) {
        return Err(invalid("cpi/step", "must be positive"));
    }
    if cpi > scenario.duration + 1e-9 {
        return Err(invalid(
            "cpi",
            format!("{cpi} s exceeds the {} s record", scenario.duration),
        ));
    }
    let windows = window_count(scenario.duration, cpi, step);
    let hr = hz_to_bpm(scenario.heartbeat_fundamental);
    Ok(HrTrace::new(
        (0..windows)
            .map(|k| TraceEntry {
                time_s: k as f64 * step + 0.5 * cpi,
                hr_bpm: hr,
                tag: Tag::Reference,
                delta_hz: None,
            })
            .collect(),
    ))
}

/// Number of `cpi`-long windows advanced by `step` that fit in `duration`.
pub fn window_count(duration: f64, cpi: f64, step: f64) -> usize {
    ((duration - cpi) / step + 1e-9).floor() as usize + 1
}

//! Radar cube to slow-time phase: range FFT, static clutter removal,
//! target-bin detection, arctangent demodulation with unwrapping, and
//! correlation-weighted multi-bin phase enhancement.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::radar::RadarCube;

/// Real slow-time phase series in rad.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSignal {
    pub samples: Vec<f64>,
    /// Slow-time rate in Hz.
    pub sample_rate: f64,
    pub source_bin: Option<usize>,
    /// True when more than one range bin contributed.
    pub enhanced: bool,
    /// Indices whose IQ magnitude was zero; their phase was carried forward.
    pub carried: Vec<usize>,
}

impl PhaseSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Self {
        Self {
            samples,
            sample_rate,
            source_bin: None,
            enhanced: false,
            carried: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Displacement in m, `λ / 4π · θ`.
    pub fn to_displacement(&self, wavelength: f64) -> Vec<f64> {
        let k = wavelength / (4.0 * PI);
        self.samples.iter().map(|v| v * k).collect()
    }
}

/// Per-frame range spectra.
///
/// `raw` is the windowed range FFT; `values` has each bin's across-frame
/// complex mean removed. Detection runs on `values` (moving reflectors
/// only); phase is read from `raw`, because mean removal shifts the centre
/// of the IQ arc and would distort the arctangent.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfiles {
    pub frames: usize,
    pub bins: usize,
    pub raw: Vec<Complex64>,
    pub values: Vec<Complex64>,
    /// Metres per bin.
    pub bin_width: f64,
    /// Frame rate in Hz.
    pub sample_rate_slow: f64,
}

impl RangeProfiles {
    /// Assembles profiles from pre-cancellation spectra and applies the
    /// average cancellation.
    pub fn from_raw(
        frames: usize,
        bins: usize,
        raw: Vec<Complex64>,
        bin_width: f64,
        sample_rate_slow: f64,
    ) -> Result<Self> {
        if raw.len() != frames * bins {
            return Err(invalid("raw", "length must be frames x bins"));
        }
        let mut values = raw.clone();
        remove_static_clutter(&mut values, frames, bins);
        Ok(Self {
            frames,
            bins,
            raw,
            values,
            bin_width,
            sample_rate_slow,
        })
    }

    pub fn raw_bin(&self, bin: usize) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.frames).map(move |m| self.raw[m * self.bins + bin])
    }

    /// Across-frame mean power of each clutter-removed bin.
    pub fn mean_power(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.bins];
        for frame in self.values.chunks_exact(self.bins) {
            for (acc, z) in p.iter_mut().zip(frame) {
                *acc += z.norm_sqr();
            }
        }
        let n = self.frames.max(1) as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }
}

/// Subtracts each bin's across-frame complex mean.
pub fn remove_static_clutter(values: &mut [Complex64], frames: usize, bins: usize) {
    if frames == 0 {
        return;
    }
    let mut mean = vec![Complex64::default(); bins];
    for frame in values.chunks_exact(bins) {
        for (m, z) in mean.iter_mut().zip(frame) {
            *m += z;
        }
    }
    let n = frames as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    for frame in values.chunks_exact_mut(bins) {
        for (z, m) in frame.iter_mut().zip(&mean) {
            *z -= m;
        }
    }
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Hann-windowed range FFT of every frame followed by average cancellation.
pub fn range_profiles(cube: &RadarCube) -> Result<RangeProfiles> {
    let n = cube.fast_time;
    if n < 8 {
        return Err(invalid(
            "fast_time",
            format!("need at least 8 samples, got {n}"),
        ));
    }
    let bins = n / 2;
    let window = hann(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let mut raw = Vec::with_capacity(cube.frames * bins);
    for m in 0..cube.frames {
        for ((b, z), w) in buf.iter_mut().zip(cube.frame(m)).zip(&window) {
            *b = z * w;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        raw.extend_from_slice(&buf[..bins]);
    }
    let cfg = &cube.config;
    RangeProfiles::from_raw(
        cube.frames,
        bins,
        raw,
        cfg.range_bin_width(),
        cfg.frame_rate(),
    )
}

/// Bin with the largest clutter-removed mean power inside
/// `[min_range, max_range]`; ties go to the nearer bin.
pub fn detect_target_bin(
    profiles: &RangeProfiles,
    min_range: f64,
    max_range: f64,
) -> Result<usize> {
    let lo = (min_range / profiles.bin_width).ceil().max(0.0) as usize;
    let hi =
        ((max_range / profiles.bin_width).floor() as usize).min(profiles.bins.saturating_sub(1));
    if !(min_range <= max_range) || lo > hi {
        return Err(invalid(
            "range gate",
            format!("[{min_range}, {max_range}] m contains no bins"),
        ));
    }
    let power = profiles.mean_power();
    let mut best = None::<(usize, f64)>;
    for (b, &p) in power.iter().enumerate().take(hi + 1).skip(lo) {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((b, p));
        }
    }
    match best {
        Some((b, p)) if p > 0.0 => Ok(b),
        _ => Err(Error::NoTarget {
            min_range_m: min_range,
            max_range_m: max_range,
        }),
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// In-place unwrap: a ±2π correction is applied wherever consecutive
/// samples jump by more than π.
pub fn unwrap_phase(phase: &mut [f64]) {
    let mut offset = 0.0;
    let mut prev = match phase.first() {
        Some(&p) => p,
        None => return,
    };
    for p in phase.iter_mut().skip(1) {
        let raw = *p;
        let d = raw - prev;
        if d.abs() > PI {
            offset -= 2.0 * PI * (d / (2.0 * PI)).round();
        }
        prev = raw;
        *p = raw + offset;
    }
}

/// Wrapped arctangent of a complex series; zero-magnitude samples repeat
/// the previous phase. Returns the phases and the carried indices.
pub fn arctangent_demod(iq: impl IntoIterator<Item = Complex64>) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::new();
    let mut carried = Vec::new();
    let mut last = 0.0;
    for (i, z) in iq.into_iter().enumerate() {
        if z.re == 0.0 && z.im == 0.0 {
            carried.push(i);
        } else {
            last = z.im.atan2(z.re);
        }
        out.push(last);
    }
    (out, carried)
}

/// Unwrapped arctangent phase of one range bin.
pub fn extract_phase(profiles: &RangeProfiles, bin: usize) -> Result<PhaseSignal> {
    if bin >= profiles.bins {
        return Err(invalid(
            "bin",
            format!("{bin} out of range (0..{})", profiles.bins),
        ));
    }
    let (mut phase, carried) = arctangent_demod(profiles.raw_bin(bin));
    unwrap_phase(&mut phase);
    Ok(PhaseSignal {
        samples: phase,
        sample_rate: profiles.sample_rate_slow,
        source_bin: Some(bin),
        enhanced: false,
        carried,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

/// Pearson correlation of two equal-length series; 0 when either is flat.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Combines the phases of bins `target ± half_width` (clipped to the
/// profile) with weights equal to their correlation with the target bin.
/// Bins correlating below `min_corr` are dropped. Neighbours are aligned to
/// the target bin's mean before averaging.
pub fn enhance_phase(
    profiles: &RangeProfiles,
    target_bin: usize,
    half_width: usize,
    min_corr: f64,
) -> Result<PhaseSignal> {
    let target = extract_phase(profiles, target_bin)?;
    if half_width == 0 {
        return Ok(target);
    }
    let lo = target_bin.saturating_sub(half_width);
    let hi = (target_bin + half_width).min(profiles.bins - 1);
    let target_mean = mean(&target.samples);

    let mut acc = target.samples.clone();
    let mut weight_sum = 1.0;
    let mut contributors = 1;
    for b in (lo..=hi).filter(|&b| b != target_bin) {
        let neighbour = extract_phase(profiles, b)?;
        // target weight is 1, so clamping keeps it the largest
        let w = pearson(&target.samples, &neighbour.samples).min(1.0);
        if !(w >= min_corr) || w <= 0.0 {
            continue;
        }
        let shift = target_mean - mean(&neighbour.samples);
        for (a, v) in acc.iter_mut().zip(&neighbour.samples) {
            *a += w * (v + shift);
        }
        weight_sum += w;
        contributors += 1;
    }
    if contributors == 1 {
        return Ok(target);
    }
    acc.iter_mut().for_each(|a| *a /= weight_sum);
    Ok(PhaseSignal {
        samples: acc,
        enhanced: true,
        ..target
    })
}

/// Range gate and enhancement settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub min_range: f64,
    pub max_range: f64,
    pub enhance_width: usize,
    pub min_corr: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_range: 0.3,
            max_range: 3.0,
            enhance_width: 2,
            min_corr: 0.7,
        }
    }
}

/// Full preprocessing chain from a cube to the enhanced phase signal.
pub fn preprocess(cube: &RadarCube, config: &PreprocessConfig) -> Result<PhaseSignal> {
    let profiles = range_profiles(cube)?;
    let bin = detect_target_bin(&profiles, config.min_range, config.max_range)?;
    enhance_phase(&profiles, bin, config.enhance_width, config.min_corr)
}

//! Windowed power spectra and band-limited peak search.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::preprocess::hann;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    Rectangular,
    Hann,
}

impl Taper {
    fn window(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rectangular => vec![1.0; n],
            Taper::Hann => hann(n),
        }
    }
}

/// One-sided power spectrum on a uniform grid starting at 0 Hz.
///
/// Powers are scaled so that their sum equals the energy of the tapered,
/// mean-removed input.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub power: Vec<f64>,
    /// Grid spacing in Hz, `fs / (N · zero_pad_factor)`.
    pub spacing: f64,
    pub window_seconds: f64,
    pub zero_pad_factor: usize,
    pub taper: Taper,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.spacing
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.power.len()).map(|i| self.frequency(i))
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequency(self.power.len().saturating_sub(1))
    }

    /// Power of the bin nearest `freq`.
    pub fn power_at(&self, freq: f64) -> f64 {
        let i = (freq / self.spacing).round() as usize;
        self.power[i.min(self.power.len() - 1)]
    }

    /// Writes `freq_hz,power` rows up to `max_hz`.
    pub fn write_csv<W: Write>(&self, mut out: W, max_hz: f64) -> Result<()> {
        writeln!(out, "freq_hz,power")?;
        for (f, p) in self.frequencies().zip(&self.power) {
            if f > max_hz {
                break;
            }
            writeln!(out, "{f:.6},{p:.6e}")?;
        }
        Ok(())
    }
}

/// Power-spectrum estimator that caches FFT plans and windows per length.
pub struct SpectralEstimator {
    planner: FftPlanner<f64>,
    plans: HashMap<usize, Arc<dyn Fft<f64>>>,
    windows: HashMap<(usize, Taper), Vec<f64>>,
}

impl Default for SpectralEstimator {
    fn default() -> Self {
        Self {
            planner: FftPlanner::new(),
            plans: HashMap::new(),
            windows: HashMap::new(),
        }
    }
}

impl SpectralEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn power_spectrum(
        &mut self,
        signal: &[f64],
        fs: f64,
        zero_pad_factor: usize,
        taper: Taper,
    ) -> Result<Spectrum> {
        let n = signal.len();
        if n < 16 {
            return Err(invalid(
                "signal",
                format!("need at least 16 samples, got {n}"),
            ));
        }
        if zero_pad_factor == 0 {
            return Err(invalid("zero_pad_factor", "must be >= 1"));
        }
        if !(fs > 0.0) {
            return Err(invalid("fs", "must be positive"));
        }
        let nfft = n * zero_pad_factor;
        let planner = &mut self.planner;
        let fft = self
            .plans
            .entry(nfft)
            .or_insert_with(|| planner.plan_fft_forward(nfft))
            .clone();
        let window = self
            .windows
            .entry((n, taper))
            .or_insert_with(|| taper.window(n));

        let mean = signal.iter().sum::<f64>() / n as f64;
        let mut buf = vec![Complex64::default(); nfft];
        for ((b, x), w) in buf.iter_mut().zip(signal).zip(window.iter()) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);

        let half = nfft / 2;
        let scale = 1.0 / nfft as f64;
        let power = buf[..=half]
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let p = z.norm_sqr() * scale;
                if k == 0 || (nfft.is_multiple_of(2) && k == half) {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect();
        Ok(Spectrum {
            power,
            spacing: fs / nfft as f64,
            window_seconds: n as f64 / fs,
            zero_pad_factor,
            taper,
        })
    }
}

/// Mean-removed, tapered, zero-padded one-sided power spectrum.
pub fn power_spectrum(
    signal: &[f64],
    fs: f64,
    zero_pad_factor: usize,
    taper: Taper,
) -> Result<Spectrum> {
    SpectralEstimator::new().power_spectrum(signal, fs, zero_pad_factor, taper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Interpolated frequency in Hz.
    pub frequency: f64,
    /// Power of the host bin.
    pub power: f64,
    pub bin: usize,
}

/// Peaks ordered by descending power.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakList(pub Vec<Peak>);

impl PeakList {
    pub fn first(&self) -> Option<&Peak> {
        self.0.first()
    }

    pub fn get(&self, i: usize) -> Option<&Peak> {
        self.0.get(i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Vertex offset, in bins, of the parabola through three samples.
fn parabolic_offset(left: f64, centre: f64, right: f64) -> f64 {
    let denom = left - 2.0 * centre + right;
    if denom == 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// The `k` strongest strict local maxima whose host bin lies in
/// `[band_lo, band_hi]`. Bins at the ends of the spectrum are never peaks.
/// Frequencies are refined by a three-point parabola on log power.
pub fn top_peaks(spectrum: &Spectrum, band_lo: f64, band_hi: f64, k: usize) -> Result<PeakList> {
    if !(band_lo >= 0.0 && band_lo <= band_hi && band_hi <= spectrum.max_frequency() + 1e-12) {
        return Err(invalid(
            "band",
            format!(
                "[{band_lo}, {band_hi}] Hz not within [0, {}] Hz",
                spectrum.max_frequency()
            ),
        ));
    }
    let p = &spectrum.power;
    let lo = ((band_lo / spectrum.spacing) - 1e-9).ceil().max(1.0) as usize;
    let hi =
        (((band_hi / spectrum.spacing) + 1e-9).floor() as usize).min(p.len().saturating_sub(2));

    let mut peaks: Vec<Peak> = (lo..=hi)
        .filter(|&i| p[i] > p[i - 1] && p[i] > p[i + 1])
        .map(|i| {
            let (l, c, r) = (p[i - 1], p[i], p[i + 1]);
            let delta = if l > 0.0 && r > 0.0 {
                parabolic_offset(l.ln(), c.ln(), r.ln())
            } else {
                parabolic_offset(l, c, r)
            };
            Peak {
                frequency: (i as f64 + delta) * spectrum.spacing,
                power: c,
                bin: i,
            }
        })
        .collect();
    // stable sort keeps ascending frequency among equal powers
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks.truncate(k);
    Ok(PeakList(peaks))
}

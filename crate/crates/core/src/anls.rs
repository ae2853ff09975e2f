//! Breathing reconstruction by grid-searched nonlinear least squares.
//!
//! For a candidate fundamental `f` the model is linear in its amplitudes:
//! each harmonic `k` contributes a sine and a cosine column, so unknown
//! harmonic phases become linear coefficients. A constant column absorbs the
//! arbitrary offset of unwrapped phase. The fundamental is the grid point
//! with the smallest least-squares residual; amplitudes then come from a QR
//! solve at that frequency.
//!
//! A [`NlsGrid`] caches the orthonormal basis of every grid frequency for a
//! fixed window length, so the per-window search is a handful of dot
//! products per candidate.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Matrix, Qr};
use crate::preprocess::PhaseSignal;

/// Fits whose design condition exceeds this are rejected as rank deficient.
const MAX_DESIGN_CONDITION: f64 = 1e10;

/// Uniform search grid `lo, lo + step, ..., <= hi` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl FrequencyGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && step > 0.0) {
            return Err(invalid(
                "grid",
                format!("need 0 < lo <= hi and step > 0, got {lo}:{hi}:{step}"),
            ));
        }
        Ok(Self { lo, hi, step })
    }

    /// 0.1 to 0.5 Hz in 0.1 BPM steps.
    pub fn breathing() -> Self {
        Self {
            lo: 0.1,
            hi: 0.5,
            step: 1.0 / 600.0,
        }
    }

    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Harmonic series fitted to one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicModel {
    /// Fundamental in Hz.
    pub fundamental: f64,
    pub order: usize,
    /// `(sin, cos)` coefficient of each harmonic, rad.
    pub coefficients: Vec<(f64, f64)>,
    /// Constant term of the fit (unwrapped-phase offset).
    pub offset: f64,
    /// First sample of the window in the parent signal.
    pub window_start: usize,
    /// Mean squared residual, rad².
    pub residual_power: f64,
}

impl HarmonicModel {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.coefficients.iter().map(|(s, c)| s.hypot(*c)).collect()
    }

    /// Harmonic part of the model (offset excluded) at `n` samples.
    pub fn evaluate(&self, n: usize, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                self.coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let w = 2.0 * PI * (k + 1) as f64 * self.fundamental * t;
                        a * w.sin() + b * w.cos()
                    })
                    .sum()
            })
            .collect()
    }

    /// RMS residual, used as the noise-floor estimate.
    pub fn noise_floor(&self) -> f64 {
        self.residual_power.sqrt()
    }

    /// True when every coefficient is below three times the noise floor.
    pub fn is_low_snr(&self) -> bool {
        let floor = 3.0 * self.noise_floor();
        self.coefficients
            .iter()
            .all(|(a, b)| a.abs() < floor && b.abs() < floor)
    }
}

fn check_nyquist(f: f64, order: usize, fs: f64) -> Result<()> {
    if order == 0 {
        return Err(invalid("order", "need at least one harmonic"));
    }
    let top = order as f64 * f;
    if top >= 0.5 * fs {
        return Err(Error::Nyquist {
            what: "highest model harmonic",
            frequency_hz: top,
            nyquist_hz: 0.5 * fs,
        });
    }
    Ok(())
}

/// `N x 2K` design: column `2k` is `sin(2π (k+1) f n / fs)`, column `2k+1`
/// the matching cosine (0-based).
pub fn harmonic_matrix(f: f64, order: usize, n: usize, fs: f64) -> Result<Matrix> {
    check_nyquist(f, order, fs)?;
    let mut h = Matrix::zeros(n, 2 * order);
    fill_harmonics(&mut h, f, order, fs);
    Ok(h)
}

fn fill_harmonics(h: &mut Matrix, f: f64, order: usize, fs: f64) {
    for i in 0..h.rows() {
        let w = 2.0 * PI * f * i as f64 / fs;
        for k in 0..order {
            let (s, c) = ((k + 1) as f64 * w).sin_cos();
            h.set(i, 2 * k, s);
            h.set(i, 2 * k + 1, c);
        }
    }
}

/// Harmonic design plus a trailing constant column.
fn design_with_offset(f: f64, order: usize, n: usize, fs: f64) -> Matrix {
    let mut h = Matrix::zeros(n, 2 * order + 1);
    fill_harmonics(&mut h, f, order, fs);
    h.column_mut(2 * order).fill(1.0);
    h
}

struct Design {
    h: Matrix,
    qr: Qr,
    condition: f64,
}

/// Least-squares harmonic fits for one segment length, with the design
/// factorization cached per fundamental. Sliding windows mostly share a grid
/// fundamental, so most fits reuse an earlier factorization.
pub struct HarmonicFitter {
    n: usize,
    fs: f64,
    order: usize,
    designs: HashMap<u64, Design>,
}

impl HarmonicFitter {
    pub fn new(n: usize, fs: f64, order: usize) -> Self {
        Self {
            n,
            fs,
            order,
            designs: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn design(&mut self, f: f64) -> Result<&Design> {
        check_nyquist(f, self.order, self.fs)?;
        if self.n < 2 * self.order + 1 {
            return Err(invalid(
                "segment",
                format!(
                    "{} samples cannot fit {} parameters",
                    self.n,
                    2 * self.order + 1
                ),
            ));
        }
        let key = f.to_bits();
        if !self.designs.contains_key(&key) {
            if self.designs.len() >= 64 {
                self.designs.clear();
            }
            let h = design_with_offset(f, self.order, self.n, self.fs);
            let qr = Qr::new(&h)?;
            let condition = qr.condition();
            self.designs.insert(key, Design { h, qr, condition });
        }
        let design = &self.designs[&key];
        if !(design.condition <= MAX_DESIGN_CONDITION) {
            return Err(Error::RankDeficient {
                condition: design.condition,
            });
        }
        Ok(design)
    }

    pub fn fit(&mut self, segment: &[f64], f: f64) -> Result<HarmonicModel> {
        let (n, order) = (self.n, self.order);
        if segment.len() != n {
            return Err(invalid(
                "segment",
                format!("{} samples for a {n}-sample fitter", segment.len()),
            ));
        }
        let (x, residual) = self.design(f)?.qr.solve(segment)?;
        Ok(HarmonicModel {
            fundamental: f,
            order,
            coefficients: x[..2 * order].chunks(2).map(|c| (c[0], c[1])).collect(),
            offset: x[2 * order],
            window_start: 0,
            residual_power: residual / n as f64,
        })
    }

    /// Harmonic part of `model` over this fitter's length (offset excluded).
    pub fn evaluate(&mut self, model: &HarmonicModel) -> Result<Vec<f64>> {
        if model.order != self.order {
            return Err(invalid("model", "order differs from the fitter"));
        }
        let mut out = vec![0.0; self.n];
        let h = &self.design(model.fundamental)?.h;
        for (k, (a, b)) in model.coefficients.iter().enumerate() {
            for ((o, s), c) in out.iter_mut().zip(h.column(2 * k)).zip(h.column(2 * k + 1)) {
                *o += a * s + b * c;
            }
        }
        Ok(out)
    }
}

/// Least-squares amplitudes of `order` harmonics of `f` (plus offset).
pub fn fit_amplitudes(segment: &[f64], fs: f64, f: f64, order: usize) -> Result<HarmonicModel> {
    HarmonicFitter::new(segment.len(), fs, order).fit(segment, f)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Grid search for one window length.
///
/// For every grid frequency only the triangular factor `R` of its design is
/// kept: with `b = Hᵀy` the captured energy is `‖R⁻ᵀ b‖²`. The entries of
/// `b` are harmonic correlations, which are accumulated once per block of
/// samples and then combined for every window that covers those blocks.
#[derive(Debug, Clone)]
pub struct NlsGrid {
    pub frequencies: Vec<f64>,
    pub order: usize,
    pub window_len: usize,
    pub fs: f64,
    /// Row-major `p x p` upper-triangular factors, `p = 2K + 1`.
    factors: Vec<Vec<f64>>,
}

impl NlsGrid {
    pub fn new(grid: &FrequencyGrid, order: usize, window_len: usize, fs: f64) -> Result<Self> {
        if window_len < 2 * order + 1 {
            return Err(invalid("window", "too short for the model order"));
        }
        let candidates: Vec<f64> = grid
            .points()
            .into_iter()
            .filter(|&f| (order as f64) * f < 0.5 * fs)
            .collect();
        if candidates.is_empty() {
            return Err(invalid("grid", "no grid point below Nyquist"));
        }
        let p = 2 * order + 1;
        let built: Vec<(f64, Vec<f64>)> = candidates
            .par_iter()
            .filter_map(|&f| {
                let qr = Qr::new(&design_with_offset(f, order, window_len, fs)).ok()?;
                if !(qr.condition() <= MAX_DESIGN_CONDITION) {
                    return None;
                }
                let r = qr.r();
                let rows = (0..p).flat_map(|i| (0..p).map(move |j| (i, j)));
                Some((f, rows.map(|(i, j)| r.get(i, j)).collect()))
            })
            .collect();
        if built.is_empty() {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let (frequencies, factors) = built.into_iter().unzip();
        Ok(Self {
            frequencies,
            order,
            window_len,
            fs,
            factors,
        })
    }

    fn omegas(&self) -> Vec<f64> {
        self.frequencies
            .iter()
            .flat_map(|&f| (1..=self.order).map(move |k| 2.0 * PI * k as f64 * f / self.fs))
            .collect()
    }

    /// `Σ y[b·block + i] e^{jωi}` for every harmonic and block, harmonic-major.
    fn block_sums(&self, signal: &[f64], block: usize, omegas: &[f64]) -> Vec<Complex64> {
        let nblocks = signal.len() / block;
        let mut out = vec![Complex64::default(); omegas.len() * nblocks];
        out.par_chunks_mut(nblocks)
            .zip(omegas)
            .for_each(|(row, &omega)| {
                let table: Vec<(f64, f64)> = (0..block)
                    .map(|i| {
                        let (s, c) = (omega * i as f64).sin_cos();
                        (c, s)
                    })
                    .collect();
                for (slot, y) in row.iter_mut().zip(signal.chunks_exact(block)) {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (v, (c, s)) in y.iter().zip(&table) {
                        re += v * c;
                        im += v * s;
                    }
                    *slot = Complex64::new(re, im);
                }
            });
        out
    }

    /// Residual energy of every grid frequency for each window
    /// `signal[s .. s + window_len]`, `s = 0, step, 2 step, ...`.
    fn scan(&self, signal: &[f64], step: usize) -> Vec<(usize, Vec<f64>)> {
        let win = self.window_len;
        let block = gcd(win, step);
        let nblocks = signal.len() / block;
        let nb = win / block;
        let omegas = self.omegas();
        // The offset column makes the fit shift invariant; centring keeps the
        // energy subtraction below well conditioned.
        let mean = signal.iter().sum::<f64>() / signal.len() as f64;
        let signal: Vec<f64> = signal.iter().map(|v| v - mean).collect();
        let sums = self.block_sums(&signal, block, &omegas);
        let totals: Vec<f64> = signal.chunks_exact(block).map(|c| c.iter().sum()).collect();
        let rot: Vec<Complex64> = omegas
            .iter()
            .flat_map(|&w| (0..nb).map(move |j| Complex64::from_polar(1.0, w * (j * block) as f64)))
            .collect();
        // Σ_{i<win} e^{jωi}
        let column_sums: Vec<Complex64> = omegas
            .iter()
            .map(|&w| {
                let one = Complex64::new(1.0, 0.0);
                (one - Complex64::from_polar(1.0, w * win as f64))
                    / (one - Complex64::from_polar(1.0, w))
            })
            .collect();
        let p = 2 * self.order + 1;
        let starts: Vec<usize> = (0..=signal.len() - win).step_by(step).collect();
        starts
            .par_iter()
            .map(|&s| {
                let b0 = s / block;
                let mu = totals[b0..b0 + nb].iter().sum::<f64>() / win as f64;
                let energy: f64 = signal[s..s + win].iter().map(|v| (v - mu) * (v - mu)).sum();
                let mut rhs = vec![0.0; p];
                let mut z = vec![0.0; p];
                let residuals = self
                    .factors
                    .iter()
                    .enumerate()
                    .map(|(fi, r)| {
                        for k in 0..self.order {
                            let idx = fi * self.order + k;
                            let c: Complex64 = (0..nb)
                                .map(|j| rot[idx * nb + j] * sums[idx * nblocks + b0 + j])
                                .sum::<Complex64>()
                                - mu * column_sums[idx];
                            rhs[2 * k] = c.im;
                            rhs[2 * k + 1] = c.re;
                        }
                        rhs[p - 1] = 0.0;
                        // forward substitution with Rᵀ
                        for i in 0..p {
                            let mut v = rhs[i];
                            for j in 0..i {
                                v -= r[j * p + i] * z[j];
                            }
                            z[i] = v / r[i * p + i];
                        }
                        energy - dot(&z, &z)
                    })
                    .collect();
                (s, residuals)
            })
            .collect()
    }

    fn argmin(&self, residuals: &[f64]) -> f64 {
        let mut best = 0;
        for (i, v) in residuals.iter().enumerate() {
            if *v < residuals[best] {
                best = i;
            }
        }
        self.frequencies[best]
    }

    /// Residual energy `‖y‖² - ‖Qᵀy‖²` of every grid frequency.
    pub fn residuals(&self, segment: &[f64]) -> Vec<f64> {
        assert_eq!(segment.len(), self.window_len);
        let mut out = self.scan(segment, self.window_len);
        out.swap_remove(0)
            .1
            .into_iter()
            .map(|r| r.max(0.0))
            .collect()
    }

    /// Grid frequency with the smallest residual; ties go to the lower one.
    pub fn best_frequency(&self, segment: &[f64]) -> f64 {
        assert_eq!(segment.len(), self.window_len);
        let scan = self.scan(segment, self.window_len);
        self.argmin(&scan[0].1)
    }

    /// Best grid frequency of every window advanced by `step` samples.
    pub fn best_frequencies(&self, signal: &[f64], step: usize) -> Vec<(usize, f64)> {
        self.scan(signal, step)
            .into_iter()
            .map(|(s, r)| (s, self.argmin(&r)))
            .collect()
    }

    pub fn estimate(&self, segment: &[f64]) -> Result<HarmonicModel> {
        fit_amplitudes(segment, self.fs, self.best_frequency(segment), self.order)
    }
}

/// Grid-searched breathing fundamental with its fitted amplitudes.
pub fn estimate_breathing(
    segment: &[f64],
    fs: f64,
    grid: &FrequencyGrid,
    order: usize,
) -> Result<HarmonicModel> {
    NlsGrid::new(grid, order, segment.len(), fs)?.estimate(segment)
}

/// Sliding-window settings for respiration reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnlsConfig {
    pub window_s: f64,
    pub step_s: f64,
    pub grid: FrequencyGrid,
    /// Number of breathing harmonics `K_b`.
    pub order: usize,
}

impl Default for AnlsConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            step_s: 1.0,
            grid: FrequencyGrid::breathing(),
            order: 3,
        }
    }
}

impl AnlsConfig {
    fn lengths(&self, fs: f64) -> Result<(usize, usize)> {
        let win = (self.window_s * fs).round() as usize;
        let step = (self.step_s * fs).round() as usize;
        if win == 0 || step == 0 {
            return Err(invalid("anls window", "window and step must span samples"));
        }
        Ok((win, step))
    }
}

/// Per-window breathing models over a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreathingTrack {
    pub models: Vec<HarmonicModel>,
    pub window_len: usize,
    pub step_len: usize,
    pub window_s: f64,
    pub step_s: f64,
}

impl BreathingTrack {
    /// Estimates every `window_s` window advanced by `step_s` inside
    /// `signal`. Window starts are relative to `signal[0]`.
    pub fn estimate(signal: &[f64], fs: f64, config: &AnlsConfig) -> Result<Self> {
        let (win, step) = config.lengths(fs)?;
        if signal.len() < win {
            return Err(invalid(
                "signal",
                format!("{} samples, window needs {win}", signal.len()),
            ));
        }
        let grid = NlsGrid::new(&config.grid, config.order, win, fs)?;
        let mut fitter = HarmonicFitter::new(win, fs, config.order);
        let models = grid
            .best_frequencies(signal, step)
            .into_iter()
            .map(|(s, f)| {
                let mut m = fitter.fit(&signal[s..s + win], f)?;
                m.window_start = s;
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            window_len: win,
            step_len: step,
            window_s: config.window_s,
            step_s: config.step_s,
        })
    }

    /// Models whose window lies entirely inside `[start, start + len)`.
    pub fn within(&self, start: usize, len: usize) -> impl Iterator<Item = &HarmonicModel> {
        let end = start + len;
        self.models
            .iter()
            .filter(move |m| m.window_start >= start && m.window_start + self.window_len <= end)
    }
}

/// Respiration reference `s_ref` over one analysis interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    /// Median of the sub-window fundamentals, Hz.
    pub fundamental: f64,
    pub subwindow_fundamentals: Vec<f64>,
    /// Amplitudes refitted over the whole interval at `fundamental`.
    pub model: HarmonicModel,
    /// `Ĥ_b α̂_b` over the interval (offset excluded).
    pub samples: Vec<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Builds the reference for `phase[cpi_start .. cpi_start + cpi_len]` from
/// precomputed sub-window estimates.
pub fn reference_from_track(
    phase: &PhaseSignal,
    cpi_start: usize,
    cpi_len: usize,
    track: &BreathingTrack,
    order: usize,
) -> Result<Reference> {
    let mut fitter = HarmonicFitter::new(cpi_len, phase.sample_rate, order);
    reference_with(&mut fitter, phase, cpi_start, track)
}

/// [`reference_from_track`] with a caller-owned fitter whose length sets
/// the interval length.
pub fn reference_with(
    fitter: &mut HarmonicFitter,
    phase: &PhaseSignal,
    cpi_start: usize,
    track: &BreathingTrack,
) -> Result<Reference> {
    let cpi_len = fitter.len();
    if cpi_start + cpi_len > phase.len() {
        return Err(invalid("cpi", "interval exceeds the record"));
    }
    let subs: Vec<f64> = track
        .within(cpi_start, cpi_len)
        .map(|m| m.fundamental)
        .collect();
    let fundamental = median(&subs).ok_or_else(|| {
        invalid(
            "cpi",
            "shorter than one ANLS window; no sub-window estimates",
        )
    })?;
    let segment = &phase.samples[cpi_start..cpi_start + cpi_len];
    let mut model = fitter.fit(segment, fundamental)?;
    model.window_start = cpi_start;
    let samples = fitter.evaluate(&model)?;
    Ok(Reference {
        fundamental,
        subwindow_fundamentals: subs,
        model,
        samples,
    })
}

/// Sliding-window ANLS over one interval: median sub-window fundamental,
/// then a single amplitude refit over the whole interval.
pub fn reconstruct_reference(
    phase: &PhaseSignal,
    cpi_start: usize,
    cpi_len: usize,
    config: &AnlsConfig,
) -> Result<Reference> {
    if cpi_start + cpi_len > phase.len() {
        return Err(invalid("cpi", "interval exceeds the record"));
    }
    let (win, _) = config.lengths(phase.sample_rate)?;
    if cpi_len < win {
        return Err(invalid("cpi", "shorter than one ANLS window"));
    }
    let segment = &phase.samples[cpi_start..cpi_start + cpi_len];
    let mut track = BreathingTrack::estimate(segment, phase.sample_rate, config)?;
    for m in &mut track.models {
        m.window_start += cpi_start;
    }
    reference_from_track(phase, cpi_start, cpi_len, &track, config.order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(n: usize, fs: f64, parts: &[(f64, f64, f64)]) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                parts
                    .iter()
                    .map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn quarter_rate_columns() {
        let h = harmonic_matrix(25.0, 1, 8, 100.0).unwrap();
        let sin = [0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0];
        let cos = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        for i in 0..8 {
            assert!((h.get(i, 0) - sin[i]).abs() < 1e-12);
            assert!((h.get(i, 1) - cos[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_row_design() {
        let h = harmonic_matrix(0.3, 3, 1, 100.0).unwrap();
        for k in 0..3 {
            assert_eq!(h.get(0, 2 * k), 0.0);
            assert_eq!(h.get(0, 2 * k + 1), 1.0);
        }
    }

    #[test]
    fn commensurate_columns_are_orthogonal() {
        // N a multiple of fs / f
        let h = harmonic_matrix(0.25, 4, 1200, 100.0).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                if a != b {
                    let g = dot(h.column(a), h.column(b));
                    assert!(g.abs() < 1e-9, "gram[{a}][{b}] = {g}");
                }
            }
        }
    }

    #[test]
    fn nyquist_rejected() {
        assert!(harmonic_matrix(20.0, 3, 10, 100.0).is_err());
    }

    #[test]
    fn exact_two_harmonic_model() {
        let x = series(400, 100.0, &[(0.25, 2.0, 0.0), (0.5, 0.5, 0.0)]);
        let m = fit_amplitudes(&x, 100.0, 0.25, 2).unwrap();
        assert!((m.coefficients[0].0 - 2.0).abs() < 1e-9);
        assert!((m.coefficients[1].0 - 0.5).abs() < 1e-9);
        assert!(m.coefficients[0].1.abs() < 1e-9);
        assert!(m.residual_power < 1e-18);
        let amps = m.amplitudes();
        assert!((amps[0] - 2.0).abs() < 1e-9 && (amps[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_tone_leaves_coefficients() {
        // 20 s: 0.25, 0.5 and 1.3 Hz all complete whole cycles
        let base = series(2000, 100.0, &[(0.25, 2.0, 0.3), (0.5, 0.5, -1.0)]);
        let extra = series(2000, 100.0, &[(1.3, 0.7, 0.2)]);
        let with: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
        let a = fit_amplitudes(&base, 100.0, 0.25, 2).unwrap();
        let b = fit_amplitudes(&with, 100.0, 0.25, 2).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((p.0 - q.0).abs() < 1e-6 && (p.1 - q.1).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_segment_gives_zero_model() {
        let m = fit_amplitudes(&[0.0; 100], 100.0, 0.3, 3).unwrap();
        assert!(m.coefficients.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
        assert_eq!(m.residual_power, 0.0);
    }

    #[test]
    fn degenerate_frequency_is_rank_deficient() {
        let x = vec![1.0; 50];
        assert!(matches!(
            fit_amplitudes(&x, 100.0, 0.0, 1),
            Err(Error::RankDeficient { .. })
        ));
        assert!(fit_amplitudes(&x[..6], 100.0, 0.3, 3).is_err());
    }

    #[test]
    fn fit_removes_constant_offset() {
        let x: Vec<f64> = series(500, 100.0, &[(0.3, 1.0, 0.4)])
            .iter()
            .map(|v| v + 12.5)
            .collect();
        let m = fit_amplitudes(&x, 100.0, 0.3, 1).unwrap();
        assert!((m.offset - 12.5).abs() < 1e-9);
        assert!(m.residual_power < 1e-20);
    }

    #[test]
    fn on_grid_breathing_is_exact() {
        let x = series(
            500,
            100.0,
            &[(0.26, 3.0, 0.1), (0.52, 1.5, 0.7), (0.78, 0.75, 2.0)],
        );
        let m = estimate_breathing(&x, 100.0, &FrequencyGrid::breathing(), 3).unwrap();
        assert!((m.fundamental - 0.26).abs() < 1e-12);
        assert!(m.residual_power < 1e-20);
    }

    #[test]
    fn off_grid_within_resolution() {
        let x = series(
            500,
            100.0,
            &[(0.2633, 3.0, 0.1), (0.5266, 1.5, 0.7), (0.7899, 0.75, 2.0)],
        );
        let m = estimate_breathing(&x, 100.0, &FrequencyGrid::breathing(), 3).unwrap();
        assert!((m.fundamental - 0.2633).abs() <= 1.0 / 600.0 + 0.5 / 600.0);
    }

    #[test]
    fn noise_only_is_flagged_low_snr() {
        let normal = Normal::new(0.0, 0.1).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
            let input = dot(&x, &x) / 500.0;
            let m = estimate_breathing(&x, 100.0, &FrequencyGrid::breathing(), 3).unwrap();
            assert!(m.is_low_snr());
            assert!(m.residual_power > 0.9 * input && m.residual_power <= input);
        }
    }

    #[test]
    fn stationary_reference_matches_truth() {
        let truth = series(
            2000,
            100.0,
            &[(0.26, 3.0, 0.1), (0.52, 1.5, 0.7), (0.78, 0.75, 2.0)],
        );
        let phase = PhaseSignal::new(truth.iter().map(|v| v + 4.0).collect(), 100.0);
        let r = reconstruct_reference(&phase, 0, 2000, &AnlsConfig::default()).unwrap();
        assert_eq!(r.subwindow_fundamentals.len(), 16);
        assert!((r.fundamental - 0.26).abs() < 1e-12);
        let err: f64 = r
            .samples
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((err / dot(&truth, &truth)).sqrt() < 1e-6);
    }

    #[test]
    fn one_spiked_subwindow_does_not_move_the_median() {
        let mut x = series(
            2000,
            100.0,
            &[(0.26, 3.0, 0.1), (0.52, 1.5, 0.7), (0.78, 0.75, 2.0)],
        );
        for v in &mut x[50..60] {
            *v += 40.0;
        }
        let phase = PhaseSignal::new(x, 100.0);
        let r = reconstruct_reference(&phase, 0, 2000, &AnlsConfig::default()).unwrap();
        assert!(r.subwindow_fundamentals[0] != 0.26);
        assert!((r.fundamental - 0.26).abs() < 1e-12);
    }

    #[test]
    fn absent_breathing_gives_negligible_reference() {
        // 1.7 Hz is beyond the third harmonic of every grid point; only
        // sidelobe leakage is captured
        let x = series(2000, 100.0, &[(1.7, 0.3, 0.0)]);
        let power = dot(&x, &x);
        let r = reconstruct_reference(&PhaseSignal::new(x, 100.0), 0, 2000, &AnlsConfig::default())
            .unwrap();
        assert!(dot(&r.samples, &r.samples) < 1e-2 * power);
    }

    #[test]
    fn short_cpi_rejected() {
        let phase = PhaseSignal::new(vec![0.0; 1000], 100.0);
        assert!(reconstruct_reference(&phase, 0, 400, &AnlsConfig::default()).is_err());
    }

    #[test]
    fn track_reuse_matches_direct_reconstruction() {
        let x = series(
            3000,
            100.0,
            &[(0.3, 3.0, 0.1), (0.6, 1.0, 0.7), (1.1, 0.2, 0.0)],
        );
        let phase = PhaseSignal::new(x, 100.0);
        let cfg = AnlsConfig::default();
        let track = BreathingTrack::estimate(&phase.samples, 100.0, &cfg).unwrap();
        let a = reference_from_track(&phase, 500, 2000, &track, 3).unwrap();
        let b = reconstruct_reference(&phase, 500, 2000, &cfg).unwrap();
        assert_eq!(a.subwindow_fundamentals, b.subwindow_fundamentals);
        assert_eq!(a.samples, b.samples);
    }

    proptest::proptest! {
        #[test]
        fn residual_shrinks_with_order(f in 0.15..0.45f64, seed in 0u64..1000) {
            let normal = Normal::new(0.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..300).map(|_| normal.sample(&mut rng)).collect();
            let mut last = f64::INFINITY;
            for k in 1..=5 {
                let m = fit_amplitudes(&x, 100.0, f, k).unwrap();
                proptest::prop_assert!(m.residual_power <= last * (1.0 + 1e-12));
                last = m.residual_power;
            }
        }

        #[test]
        fn fit_residual_is_orthogonal_to_design(f in 0.15..0.45f64, seed in 0u64..1000) {
            let normal = Normal::new(0.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..400).map(|_| normal.sample(&mut rng)).collect();
            let m = fit_amplitudes(&x, 100.0, f, 3).unwrap();
            let h = harmonic_matrix(f, 3, 400, 100.0).unwrap();
            let fitted = m.evaluate(400, 100.0);
            let r: Vec<f64> = x.iter().zip(&fitted).map(|(a, b)| a - b - m.offset).collect();
            let rn = dot(&r, &r).sqrt();
            for c in 0..6 {
                let col = h.column(c);
                proptest::prop_assert!(dot(col, &r).abs() < 1e-9 * dot(col, col).sqrt() * rn.max(1.0));
            }
        }
    }
}

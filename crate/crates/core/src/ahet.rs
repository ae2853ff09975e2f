//! Harmonic-credibility heart-rate tracker and the plain peak-picking
//! baseline.
//!
//! Each window the strongest peak in the fundamental band is paired with the
//! strongest peak near its expected second harmonic. The pair is credible
//! when `|2 f_fund - f_harm| <= V_e`; the estimate is then the mean of the
//! two heart-rate readings `f_fund` and `f_harm / 2`. If the strongest peak
//! fails, the second strongest is tried. When both fail, or the estimate
//! jumps by more than `V_a`, the search narrows around `h̄`, the mean of the
//! first few stable estimates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{top_peaks, Spectrum};
use crate::trace::Tag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhetConfig {
    /// Credibility threshold `V_e`, Hz.
    pub v_e: f64,
    /// Consecutive-estimate threshold `V_a`, Hz.
    pub v_a: f64,
    pub fundamental_band: (f64, f64),
    /// Upper edge of the harmonic search region, Hz.
    pub harmonic_ceiling: f64,
    pub stable_history_len: usize,
}

impl Default for AhetConfig {
    fn default() -> Self {
        Self {
            v_e: 0.1,
            v_a: 0.1,
            fundamental_band: (0.7, 2.0),
            harmonic_ceiling: 4.0,
            stable_history_len: 5,
        }
    }
}

impl AhetConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.fundamental_band;
        if !(self.v_e > 0.0 && self.v_a > 0.0) {
            return Err(invalid("ahet thresholds", "V_e and V_a must be positive"));
        }
        if !(lo > 0.0 && lo < hi && hi < self.harmonic_ceiling) {
            return Err(invalid(
                "ahet bands",
                "need 0 < fundamental lo < hi < harmonic ceiling",
            ));
        }
        if self.stable_history_len == 0 {
            return Err(invalid("stable_history_len", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    /// Stable estimates collected before `h_bar` froze, Hz.
    pub stable_history: Vec<f64>,
    pub h_bar: Option<f64>,
    pub last_estimate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhetEstimate {
    pub hr_hz: f64,
    pub tag: Tag,
    /// `|2 f_fund - f_harm|`; infinite when no pair was formed.
    pub delta_hz: f64,
}

/// `Δ = |2 f_fund - f_harm|` and whether `Δ <= V_e`.
pub fn credibility(f_fund: f64, f_harm: f64, v_e: f64) -> (f64, bool) {
    let delta = (2.0 * f_fund - f_harm).abs();
    (delta, delta <= v_e)
}

fn strongest(spectrum: &Spectrum, lo: f64, hi: f64) -> Option<f64> {
    let hi = hi.min(spectrum.max_frequency());
    let lo = lo.max(0.0);
    if lo > hi {
        return None;
    }
    top_peaks(spectrum, lo, hi, 1)
        .ok()
        .and_then(|p| p.first().map(|p| p.frequency))
}

struct Pairing {
    estimate: f64,
    delta: f64,
    reliable: bool,
}

fn pair(spectrum: &Spectrum, f_fund: f64, config: &AhetConfig) -> Pairing {
    let lo = 2.0 * f_fund - config.v_e;
    match strongest(spectrum, lo, config.harmonic_ceiling) {
        Some(f_harm) => {
            let (delta, reliable) = credibility(f_fund, f_harm, config.v_e);
            Pairing {
                estimate: 0.5 * f_fund + 0.5 * (f_harm / 2.0),
                delta,
                reliable,
            }
        }
        None => Pairing {
            estimate: f_fund,
            delta: f64::INFINITY,
            reliable: false,
        },
    }
}

/// Narrowed search around `h_bar`. `None` when neither region has a peak.
fn refine(spectrum: &Spectrum, h_bar: f64, config: &AhetConfig) -> Option<(f64, f64)> {
    let (band_lo, band_hi) = config.fundamental_band;
    let fund = strongest(
        spectrum,
        (h_bar - config.v_a).max(band_lo),
        (h_bar + config.v_a).min(band_hi),
    );
    let harm = strongest(
        spectrum,
        2.0 * (h_bar - config.v_a),
        (2.0 * (h_bar + config.v_a)).min(config.harmonic_ceiling),
    );
    match (fund, harm) {
        (Some(f), Some(h)) => Some((0.5 * f + 0.5 * (h / 2.0), credibility(f, h, config.v_e).0)),
        (Some(f), None) => Some((f, f64::INFINITY)),
        (None, Some(h)) => Some((h / 2.0, f64::INFINITY)),
        (None, None) => None,
    }
}

/// One tracker update. Pure: the returned state replaces `state`.
pub fn ahet_step(
    spectrum: &Spectrum,
    state: &TrackerState,
    config: &AhetConfig,
) -> Result<(AhetEstimate, TrackerState)> {
    config.validate()?;
    let (band_lo, band_hi) = config.fundamental_band;
    let candidates = top_peaks(spectrum, band_lo, band_hi, 2)?;

    let mut first_delta = f64::INFINITY;
    let mut accepted = None;
    for (i, peak) in candidates.0.iter().enumerate() {
        let p = pair(spectrum, peak.frequency, config);
        if i == 0 {
            first_delta = p.delta;
        }
        if p.reliable {
            let tag = if i == 0 {
                Tag::Reliable1st
            } else {
                Tag::Reliable2nd
            };
            accepted = Some(AhetEstimate {
                hr_hz: p.estimate,
                tag,
                delta_hz: p.delta,
            });
            break;
        }
    }

    let jumped = match (accepted, state.last_estimate) {
        (Some(a), Some(last)) => (a.hr_hz - last).abs() > config.v_a,
        _ => false,
    };

    let estimate = match (accepted, state.h_bar) {
        (Some(a), None) => a,
        (Some(a), Some(_)) if !jumped => a,
        (_, Some(h_bar)) => match refine(spectrum, h_bar, config) {
            Some((hr_hz, delta_hz)) => AhetEstimate {
                hr_hz,
                tag: Tag::Refined,
                delta_hz,
            },
            None => AhetEstimate {
                hr_hz: state.last_estimate.unwrap_or(h_bar),
                tag: Tag::Refined,
                delta_hz: f64::INFINITY,
            },
        },
        (None, None) => match (state.last_estimate, candidates.first()) {
            (Some(last), _) => AhetEstimate {
                hr_hz: last,
                tag: Tag::Held,
                delta_hz: first_delta,
            },
            (None, Some(peak)) => AhetEstimate {
                hr_hz: peak.frequency,
                tag: Tag::Unverified,
                delta_hz: first_delta,
            },
            (None, None) => {
                return Err(Error::NoPeak {
                    lo_hz: band_lo,
                    hi_hz: band_hi,
                })
            }
        },
    };
    let estimate = AhetEstimate {
        hr_hz: estimate.hr_hz.clamp(band_lo, band_hi),
        ..estimate
    };

    let mut next = state.clone();
    let stable = estimate.tag.is_reliable()
        && state
            .last_estimate
            .is_none_or(|last| (estimate.hr_hz - last).abs() <= config.v_a);
    if stable && next.h_bar.is_none() {
        next.stable_history.push(estimate.hr_hz);
        if next.stable_history.len() >= config.stable_history_len {
            let n = next.stable_history.len() as f64;
            next.h_bar = Some(next.stable_history.iter().sum::<f64>() / n);
        }
    }
    next.last_estimate = Some(estimate.hr_hz);
    Ok((estimate, next))
}

/// Sequential wrapper around [`ahet_step`].
#[derive(Debug, Clone, Default)]
pub struct AhetTracker {
    pub config: AhetConfig,
    pub state: TrackerState,
}

impl AhetTracker {
    pub fn new(config: AhetConfig) -> Self {
        Self {
            config,
            state: TrackerState::default(),
        }
    }

    pub fn step(&mut self, spectrum: &Spectrum) -> Result<AhetEstimate> {
        let (estimate, next) = ahet_step(spectrum, &self.state, &self.config)?;
        self.state = next;
        Ok(estimate)
    }

    /// Carries the previous estimate through a window that produced no
    /// spectrum.
    pub fn hold(&self) -> Option<f64> {
        self.state.last_estimate
    }
}

/// Strongest peak in the band, without any credibility logic.
pub fn conventional_hr(spectrum: &Spectrum, band: (f64, f64)) -> Result<f64> {
    top_peaks(spectrum, band.0, band.1, 1)?
        .first()
        .map(|p| p.frequency)
        .ok_or(Error::NoPeak {
            lo_hz: band.0,
            hi_hz: band.1,
        })
}

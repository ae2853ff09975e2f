//! Radar front-end parameters and the raw IF sample cube.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::SPEED_OF_LIGHT;

/// Chirp and sampling parameters of an FMCW front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    /// Start frequency `f_c` in Hz.
    pub carrier_frequency: f64,
    /// Chirp slope `S` in Hz/s.
    pub chirp_slope: f64,
    /// Swept bandwidth over the ADC window, in Hz.
    pub bandwidth: f64,
    /// Chirp ramp duration in s.
    pub chirp_duration: f64,
    pub adc_samples_per_chirp: usize,
    /// ADC rate in samples/s.
    pub adc_sample_rate: f64,
    /// Frame (slow-time) period in s.
    pub frame_period: f64,
    /// Transmit power and target reflectivity folded into one amplitude.
    pub transmit_power_scale: f64,
}

impl Default for RadarConfig {
    /// A 77 GHz front end: 70 MHz/µs slope, 200 samples at 4 Msps, 10 ms
    /// frames.
    fn default() -> Self {
        let chirp_slope = 70e12;
        let adc_samples_per_chirp = 200;
        let adc_sample_rate = 4e6;
        Self {
            carrier_frequency: 77e9,
            chirp_slope,
            bandwidth: chirp_slope * adc_samples_per_chirp as f64 / adc_sample_rate,
            chirp_duration: 50e-6,
            adc_samples_per_chirp,
            adc_sample_rate,
            frame_period: 10e-3,
            transmit_power_scale: 1.0,
        }
    }
}

impl RadarConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_period
    }

    /// Beat frequency of a reflector at `range` metres.
    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * self.chirp_slope * range / SPEED_OF_LIGHT
    }

    /// Width of one range-FFT bin in metres, for an unpadded FFT.
    pub fn range_bin_width(&self) -> f64 {
        let df = self.adc_sample_rate / self.adc_samples_per_chirp as f64;
        df * SPEED_OF_LIGHT / (2.0 * self.chirp_slope)
    }

    /// Largest range whose beat frequency stays below half the ADC rate.
    pub fn max_unambiguous_range(&self) -> f64 {
        0.5 * self.adc_sample_rate * SPEED_OF_LIGHT / (2.0 * self.chirp_slope)
    }

    /// Range-FFT bin holding a reflector at `range` metres.
    pub fn analytic_bin(&self, range: f64) -> usize {
        let df = self.adc_sample_rate / self.adc_samples_per_chirp as f64;
        (self.beat_frequency(range) / df).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("chirp_slope", self.chirp_slope),
            ("bandwidth", self.bandwidth),
            ("chirp_duration", self.chirp_duration),
            ("adc_sample_rate", self.adc_sample_rate),
            ("frame_period", self.frame_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        if !(self.transmit_power_scale.is_finite() && self.transmit_power_scale >= 0.0) {
            return Err(invalid("transmit_power_scale", "must be non-negative"));
        }
        if self.adc_samples_per_chirp < 2 {
            return Err(invalid("adc_samples_per_chirp", "need at least 2 samples"));
        }
        let sweep = self.chirp_slope * self.adc_samples_per_chirp as f64 / self.adc_sample_rate;
        if ((sweep - self.bandwidth) / self.bandwidth).abs() > 1e-9 {
            return Err(invalid(
                "bandwidth",
                format!(
                    "{} Hz disagrees with slope x ADC window = {sweep} Hz",
                    self.bandwidth
                ),
            ));
        }
        let wl = self.wavelength();
        if !(wl.is_finite() && wl > 0.0) {
            return Err(invalid("carrier_frequency", "wavelength is not finite"));
        }
        Ok(())
    }
}

/// Complex IF samples, frame-major: `iq[frame * fast_time + sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub frames: usize,
    pub fast_time: usize,
    pub iq: Vec<Complex64>,
    pub config: RadarConfig,
}

impl RadarCube {
    pub fn new(
        frames: usize,
        fast_time: usize,
        iq: Vec<Complex64>,
        config: RadarConfig,
    ) -> Result<Self> {
        if iq.len() != frames * fast_time {
            return Err(invalid(
                "iq",
                format!("{} samples for {frames}x{fast_time} cube", iq.len()),
            ));
        }
        if iq.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("iq", "non-finite sample"));
        }
        Ok(Self {
            frames,
            fast_time,
            iq,
            config,
        })
    }

    pub fn frame(&self, index: usize) -> &[Complex64] {
        &self.iq[index * self.fast_time..(index + 1) * self.fast_time]
    }

    pub fn duration(&self) -> f64 {
        self.frames as f64 * self.config.frame_period
    }
}

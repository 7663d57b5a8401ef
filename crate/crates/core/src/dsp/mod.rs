//! Time-frequency front end: waveform, STFT, and the four-plane quartet
//! (log-magnitude, its time rate, instantaneous frequency, group delay).

mod batch;
mod quartet;
mod stft;

pub use batch::{pad_and_mask, ChannelStats, Channel, QuartetBatch};
pub use quartet::{
    extract_quartet, group_delay, instantaneous_frequency, log_magnitude, log_magnitude_rate,
    QuartetField,
};
pub use stft::{hamming, stft, ComplexSpectrogram};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Analysis sample rate every waveform is brought to before extraction.
pub const ANALYSIS_RATE: u32 = 16_000;

/// Mono PCM waveform with samples nominally in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Linear-interpolation resampling to `rate`.
    pub fn resampled(&self, rate: u32) -> Waveform {
        if rate == self.sample_rate || self.samples.is_empty() {
            return Waveform {
                samples: self.samples.clone(),
                sample_rate: rate,
            };
        }
        let ratio = self.sample_rate as f64 / rate as f64;
        let n_out = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let i0 = (pos.floor() as usize).min(last);
                let i1 = (i0 + 1).min(last);
                let frac = pos - i0 as f64;
                self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
            })
            .collect();
        Waveform {
            samples,
            sample_rate: rate,
        }
    }
}

/// STFT analysis parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    /// Amplitude floor applied before the logarithm.
    pub mag_floor: f64,
    /// Group delay is clipped to `[-tau_clip, tau_clip]` seconds.
    pub tau_clip: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            sample_rate: ANALYSIS_RATE,
            win_length: 400,
            hop_length: 160,
            fft_size: 512,
            mag_floor: 1e-7,
            tau_clip: 400.0 / ANALYSIS_RATE as f64,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.hop_length == 0 || self.hop_length > self.win_length || self.win_length > self.fft_size {
            return bad("need 0 < hop_length <= win_length <= fft_size");
        }
        if !(self.mag_floor > 0.0) {
            return bad("mag_floor must be positive");
        }
        if !(self.tau_clip > 0.0) {
            return bad("tau_clip must be positive");
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_length as f64 / self.sample_rate as f64
    }

    /// Number of whole frames for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.win_length {
            0
        } else {
            1 + (len - self.win_length) / self.hop_length
        }
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Maps an angle to the principal interval (-pi, pi]. Values already in
/// that interval are returned unchanged, bit for bit.
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * ((x + PI) / two_pi).floor();
    if y <= -PI {
        y += two_pi;
    }
    if y > PI {
        y -= two_pi;
    }
    y
}

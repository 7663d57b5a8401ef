use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LatentSequence;
use crate::dsp::{stft, StftConfig, Waveform};
use crate::error::{Error, Result};

/// Deterministic stand-in for a pretrained frame encoder: log filterbank
/// energies through a fixed random projection.
#[derive(Clone, Debug, PartialEq)]
pub struct StubConfig {
    pub bands: usize,
    pub dim: usize,
    pub seed: u64,
    /// Energy floor before the logarithm.
    pub floor: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            bands: 40,
            dim: 64,
            seed: 17,
            floor: 1e-10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters `[bands, fft_size / 2 + 1]` evenly spaced on the mel
/// scale between 0 Hz and Nyquist, evaluated at exact bin frequencies.
pub fn mel_filterbank(bands: usize, fft_size: usize, sample_rate: u32) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((bands, bins));
    for m in 0..bands {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let w = if f > lo && f <= centre {
                (f - lo) / (centre - lo)
            } else if f > centre && f < hi {
                (hi - f) / (hi - centre)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

pub fn stub_latents(w: &Waveform, stft_cfg: &StftConfig, cfg: &StubConfig) -> Result<LatentSequence> {
    if cfg.bands == 0 || cfg.dim == 0 || !(cfg.floor > 0.0) {
        return Err(Error::InvalidConfig("stub needs bands, dim and floor > 0".into()));
    }
    let spec = stft(w, stft_cfg)?;
    let fb = mel_filterbank(cfg.bands, stft_cfg.fft_size, stft_cfg.sample_rate);
    let power = spec.amplitude.mapv(|a| a * a);
    let logmel = power.dot(&fb.t()).mapv(|e| e.max(cfg.floor).ln());
    let projection = projection(cfg);
    LatentSequence::dense(logmel.dot(&projection.t()))
}

fn projection(cfg: &StubConfig) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, (1.0 / cfg.bands as f64).sqrt()).expect("positive std");
    Array2::from_shape_simple_fn((cfg.dim, cfg.bands), || normal.sample(&mut rng))
}

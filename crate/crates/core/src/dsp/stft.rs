use std::f64::consts::PI;

use ndarray::Array2;
use realfft::RealFftPlanner;

use super::{StftConfig, Waveform};
use crate::error::{Error, Result};

/// Amplitude and phase of a short-time Fourier transform.
///
/// Phase is referenced to the first sample of each frame and lies in
/// (-pi, pi]; bins with exactly zero amplitude carry phase 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    /// `[frames, bins]`
    pub amplitude: Array2<f64>,
    /// `[frames, bins]`
    pub phase: Array2<f64>,
    pub frame_times: Vec<f64>,
    pub bin_freqs: Vec<f64>,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.amplitude.nrows()
    }

    pub fn bins(&self) -> usize {
        self.amplitude.ncols()
    }
}

/// Symmetric Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: cfg.sample_rate,
            found: w.sample_rate(),
        });
    }
    let x = w.samples();
    if x.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if x.len() < cfg.win_length {
        return Err(Error::UtteranceTooShort {
            len: x.len(),
            win: cfg.win_length,
        });
    }

    let frames = cfg.frame_count(x.len());
    let bins = cfg.bins();
    let window = hamming(cfg.win_length);
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut amplitude = Array2::zeros((frames, bins));
    let mut phase = Array2::zeros((frames, bins));
    for t in 0..frames {
        let start = t * cfg.hop_length;
        input.fill(0.0);
        for (dst, (s, wv)) in input.iter_mut().zip(x[start..start + cfg.win_length].iter().zip(&window)) {
            *dst = s * wv;
        }
        fft.process_with_scratch(&mut input, &mut spectrum, &mut scratch)
            .expect("buffer sizes come from the plan");
        for (k, c) in spectrum.iter().enumerate() {
            let a = c.norm();
            amplitude[[t, k]] = a;
            phase[[t, k]] = if a == 0.0 {
                0.0
            } else {
                let p = c.im.atan2(c.re);
                if p <= -PI {
                    PI
                } else {
                    p
                }
            };
        }
    }

    let fs = cfg.sample_rate as f64;
    Ok(ComplexSpectrogram {
        amplitude,
        phase,
        frame_times: (0..frames).map(|t| (t * cfg.hop_length) as f64 / fs).collect(),
        bin_freqs: (0..bins).map(|k| cfg.bin_frequency(k)).collect(),
        config: cfg.clone(),
    })
}

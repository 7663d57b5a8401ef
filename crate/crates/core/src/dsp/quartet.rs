use std::f64::consts::PI;

use ndarray::Array2;

use super::{stft, wrap_phase, Channel, ComplexSpectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};

/// The four time-frequency planes of one utterance plus its frame mask.
///
/// Units: `m` in nepers, `rho` in nepers per second, `f_inst` in Hz,
/// `tau_g` in seconds. All planes are `[frames, bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuartetField {
    pub m: Array2<f64>,
    pub rho: Array2<f64>,
    pub f_inst: Array2<f64>,
    pub tau_g: Array2<f64>,
    pub mask: Vec<bool>,
}

impl QuartetField {
    pub fn frames(&self) -> usize {
        self.m.nrows()
    }

    pub fn bins(&self) -> usize {
        self.m.ncols()
    }

    pub fn valid_frames(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    pub fn plane(&self, ch: Channel) -> &Array2<f64> {
        match ch {
            Channel::M => &self.m,
            Channel::Rho => &self.rho,
            Channel::Finst => &self.f_inst,
            Channel::TauG => &self.tau_g,
        }
    }

    pub fn plane_mut(&mut self, ch: Channel) -> &mut Array2<f64> {
        match ch {
            Channel::M => &mut self.m,
            Channel::Rho => &mut self.rho,
            Channel::Finst => &mut self.f_inst,
            Channel::TauG => &mut self.tau_g,
        }
    }

    /// Checks shape agreement, the prefix mask and finiteness of valid frames.
    pub fn validate(&self) -> Result<()> {
        let dim = self.m.dim();
        for ch in Channel::ALL {
            if self.plane(ch).dim() != dim {
                return Err(Error::ShapeMismatch(format!("plane {ch} has shape {:?}, expected {dim:?}", self.plane(ch).dim())));
            }
        }
        if self.mask.len() != dim.0 {
            return Err(Error::ShapeMismatch(format!("mask length {} != {} frames", self.mask.len(), dim.0)));
        }
        let valid = self.valid_frames();
        if self.mask.iter().enumerate().any(|(t, &v)| v != (t < valid)) {
            return Err(Error::Format("mask must be a prefix of ones".into()));
        }
        for ch in Channel::ALL {
            let p = self.plane(ch);
            for (t, row) in p.rows().into_iter().enumerate() {
                if self.mask[t] && row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteData(ch.to_string()));
                }
                if !self.mask[t] && row.iter().any(|&v| v != 0.0) {
                    return Err(Error::Format(format!("masked frame {t} of {ch} is not zero")));
                }
            }
        }
        Ok(())
    }
}

/// `ln(max(A, floor))`.
pub fn log_magnitude(spec: &ComplexSpectrogram, floor: f64) -> Array2<f64> {
    spec.amplitude.mapv(|a| a.max(floor).ln())
}

/// Backward difference of `m` along time, divided by the hop in seconds.
/// The first frame is 0.
pub fn log_magnitude_rate(m: &Array2<f64>, hop_seconds: f64) -> Array2<f64> {
    let (frames, bins) = m.dim();
    let mut rho = Array2::zeros((frames, bins));
    for t in 1..frames {
        for k in 0..bins {
            rho[[t, k]] = (m[[t, k]] - m[[t - 1, k]]) / hop_seconds;
        }
    }
    rho
}

/// Phase-vocoder instantaneous frequency in Hz.
///
/// The wrapped deviation of the frame-to-frame phase advance from the bin's
/// nominal advance `2 pi k hop / N` is added back onto that nominal advance.
/// The first frame, and any bin whose phase is undefined (zero amplitude in
/// this or the previous frame), reports the bin-centre frequency.
pub fn instantaneous_frequency(spec: &ComplexSpectrogram) -> Array2<f64> {
    let cfg = &spec.config;
    let (frames, bins) = spec.phase.dim();
    let hop_s = cfg.hop_seconds();
    let mut out = Array2::zeros((frames, bins));
    for k in 0..bins {
        let advance = 2.0 * PI * k as f64 * cfg.hop_length as f64 / cfg.fft_size as f64;
        let centre = cfg.bin_frequency(k);
        if frames > 0 {
            out[[0, k]] = centre;
        }
        for t in 1..frames {
            out[[t, k]] = if spec.amplitude[[t, k]] == 0.0 || spec.amplitude[[t - 1, k]] == 0.0 {
                centre
            } else {
                let dev = wrap_phase(spec.phase[[t, k]] - spec.phase[[t - 1, k]] - advance);
                (advance + dev) / (2.0 * PI * hop_s)
            };
        }
    }
    out
}

/// Negative wrapped phase difference across adjacent bins, in seconds,
/// clipped to `[-tau_clip, tau_clip]`. The last bin copies its neighbour.
pub fn group_delay(spec: &ComplexSpectrogram) -> Array2<f64> {
    let cfg = &spec.config;
    let (frames, bins) = spec.phase.dim();
    let d_omega = 2.0 * PI * cfg.sample_rate as f64 / cfg.fft_size as f64;
    let clip = cfg.tau_clip;
    let mut out = Array2::zeros((frames, bins));
    for t in 0..frames {
        for k in 0..bins.saturating_sub(1) {
            let d = wrap_phase(spec.phase[[t, k + 1]] - spec.phase[[t, k]]);
            out[[t, k]] = (-d / d_omega).clamp(-clip, clip);
        }
        if bins >= 2 {
            out[[t, bins - 1]] = out[[t, bins - 2]];
        }
    }
    out
}

pub fn extract_quartet(w: &Waveform, cfg: &StftConfig) -> Result<QuartetField> {
    let spec = stft(w, cfg)?;
    Ok(quartet_from_spectrogram(&spec))
}

pub(crate) fn quartet_from_spectrogram(spec: &ComplexSpectrogram) -> QuartetField {
    let cfg = &spec.config;
    let m = log_magnitude(spec, cfg.mag_floor);
    let rho = log_magnitude_rate(&m, cfg.hop_seconds());
    QuartetField {
        f_inst: instantaneous_frequency(spec),
        tau_g: group_delay(spec),
        mask: vec![true; m.nrows()],
        m,
        rho,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16_000).unwrap()
    }

    fn cosine(f0: f64, n: usize) -> Waveform {
        wave((0..n).map(|i| (2.0 * PI * f0 * i as f64 / 16_000.0).cos()).collect())
    }

    #[test]
    fn log_magnitude_examples() {
        let cfg = StftConfig::default();
        let mut spec = stft(&wave(vec![0.0; 400]), &cfg).unwrap();
        let m = log_magnitude(&spec, 1e-7);
        assert!((m[[0, 0]] - (-16.118095650958319)).abs() < 1e-9);
        spec.amplitude.fill(1.0);
        assert!(log_magnitude(&spec, 1e-7).iter().all(|&v| v == 0.0));
        spec.amplitude.fill(2.0);
        assert!(log_magnitude(&spec, 1e-7).iter().all(|&v| (v - 2f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn rate_of_linear_ramp() {
        let mut m = Array2::zeros((5, 3));
        for t in 0..5 {
            m.row_mut(t).fill(0.1 * t as f64);
        }
        let rho = log_magnitude_rate(&m, 0.01);
        assert!(rho.row(0).iter().all(|&v| v == 0.0));
        for t in 1..5 {
            assert!(rho.row(t).iter().all(|&v| (v - 10.0).abs() < 1e-9));
        }
        let flat = Array2::from_elem((4, 2), 3.3);
        assert!(log_magnitude_rate(&flat, 0.01).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_tone_frequency() {
        let cfg = StftConfig::default();
        let spec = stft(&cosine(1000.0, 16_000), &cfg).unwrap();
        let f = instantaneous_frequency(&spec);
        for t in 1..spec.frames() {
            assert!((f[[t, 32]] - 1000.0).abs() < 1e-6, "frame {t}: {}", f[[t, 32]]);
        }
    }

    #[test]
    fn off_bin_tone_within_one_bin() {
        let cfg = StftConfig::default();
        let spec = stft(&cosine(1010.0, 8000), &cfg).unwrap();
        let f = instantaneous_frequency(&spec);
        for t in 1..spec.frames() {
            assert!((f[[t, 32]] - 1010.0).abs() < 1.0);
        }
    }

    #[test]
    fn zero_amplitude_reports_bin_centres() {
        let cfg = StftConfig::default();
        let spec = stft(&wave(vec![0.0; 2000]), &cfg).unwrap();
        let f = instantaneous_frequency(&spec);
        for t in 0..spec.frames() {
            for k in 0..spec.bins() {
                assert_eq!(f[[t, k]], cfg.bin_frequency(k));
            }
        }
        assert!(group_delay(&spec).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_group_delay_is_its_offset() {
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 400];
        x[80] = 1.0;
        let spec = stft(&wave(x), &cfg).unwrap();
        let tau = group_delay(&spec);
        let half_bin = 0.5 / cfg.sample_rate as f64;
        for k in 0..cfg.bins() {
            assert!((tau[[0, k]] - 0.005).abs() <= half_bin, "bin {k}: {}", tau[[0, k]]);
        }
    }

    #[test]
    fn group_delay_is_clipped() {
        let cfg = StftConfig { tau_clip: 0.001, ..StftConfig::default() };
        let mut x = vec![0.0; 400];
        x[80] = 1.0;
        let spec = stft(&wave(x), &cfg).unwrap();
        assert!(group_delay(&spec).iter().all(|&v| v == 0.001));
    }

    #[test]
    fn constant_phase_offset_changes_nothing() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = stft(&wave(x), &cfg).unwrap();
        let f0 = instantaneous_frequency(&spec);
        let g0 = group_delay(&spec);
        for c in [0.1, 1.0, 3.0] {
            let mut shifted = spec.clone();
            shifted.phase.mapv_inplace(|p| p + c);
            let f1 = instantaneous_frequency(&shifted);
            let g1 = group_delay(&shifted);
            assert!(f0.iter().zip(f1.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
            assert!(g0.iter().zip(g1.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn extraction_contract() {
        let cfg = StftConfig::default();
        let q = extract_quartet(&wave(vec![0.0; 8000]), &cfg).unwrap();
        q.validate().unwrap();
        assert_eq!(q.valid_frames(), cfg.frame_count(8000));
        let floor = cfg.mag_floor.ln();
        assert!(q.m.iter().all(|&v| v == floor));
        assert!(q.rho.iter().all(|&v| v == 0.0));
        assert!(q.tau_g.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy = wave((0..12_000).map(|_| rng.random_range(-0.5..0.5)).collect());
        let q = extract_quartet(&noisy, &cfg).unwrap();
        q.validate().unwrap();
        assert!(q.tau_g.iter().all(|&v| v.abs() <= cfg.tau_clip));
    }
}

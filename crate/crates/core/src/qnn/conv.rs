use ndarray::{Array2, Array4};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::QTensor;
use crate::error::{Error, Result};
use crate::params::{visit_array, visit_array_mut, Parameters};
use crate::quaternion::HAMILTON_LAYOUT;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreqPadding {
    /// Zero-pad so the output keeps the input's bin count.
    Same,
    /// No padding; `bins - k_f + 1` outputs.
    Valid,
}

pub const BANK_NAMES: [&str; 4] = ["W_M", "W_rho", "W_f", "W_tau"];

/// Hamilton-structured quaternion convolution, stride 1.
///
/// Four real banks `[c_out, c_in, k_t, k_f]` are shared across the 4x4
/// Hamilton block of every (output, input) channel pair, so the layer holds a
/// quarter of the weights of an unconstrained real convolution between the
/// same `4 c_in -> 4 c_out` planes. Time is always zero-padded ("same").
#[derive(Clone, Debug, PartialEq)]
pub struct QConvLayer {
    pub banks: [Array4<f64>; 4],
    /// Quaternion bias, `[c_out, 4]`.
    pub bias: Array2<f64>,
    pub freq_padding: FreqPadding,
}

impl QConvLayer {
    pub fn zeros(c_in: usize, c_out: usize, k_t: usize, k_f: usize, freq_padding: FreqPadding) -> Result<Self> {
        if c_in == 0 || c_out == 0 || k_t == 0 || k_f == 0 {
            return Err(Error::InvalidConfig("convolution dimensions must be positive".into()));
        }
        if k_t % 2 == 0 || (freq_padding == FreqPadding::Same && k_f % 2 == 0) {
            return Err(Error::InvalidConfig("'same' padding needs odd kernel sizes".into()));
        }
        let bank = Array4::zeros((c_out, c_in, k_t, k_f));
        Ok(QConvLayer {
            banks: [bank.clone(), bank.clone(), bank.clone(), bank],
            bias: Array2::zeros((c_out, 4)),
            freq_padding,
        })
    }

    /// Zero-mean normal banks with variance `2 / (4 c_in k_t k_f)`, zero bias.
    pub fn init<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        k_t: usize,
        k_f: usize,
        freq_padding: FreqPadding,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(c_in, c_out, k_t, k_f, freq_padding)?;
        let std = (2.0 / (4 * c_in * k_t * k_f) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        for bank in layer.banks.iter_mut() {
            bank.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        Ok(layer)
    }

    pub fn zeros_like(&self) -> Self {
        let (c_out, c_in, k_t, k_f) = self.banks[0].dim();
        Self::zeros(c_in, c_out, k_t, k_f, self.freq_padding).expect("shape already validated")
    }

    pub fn in_channels(&self) -> usize {
        self.banks[0].dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.banks[0].dim().0
    }

    pub fn kernel(&self) -> (usize, usize) {
        let (_, _, kt, kf) = self.banks[0].dim();
        (kt, kf)
    }

    /// Real weights actually stored (bias excluded).
    pub fn real_weight_count(&self) -> usize {
        self.banks.iter().map(|b| b.len()).sum()
    }

    /// Weights of an unconstrained real convolution `4 c_in -> 4 c_out` with the same kernel.
    pub fn unconstrained_weight_count(&self) -> usize {
        let (kt, kf) = self.kernel();
        4 * self.out_channels() * 4 * self.in_channels() * kt * kf
    }

    fn padding(&self) -> (usize, usize) {
        let (kt, kf) = self.kernel();
        let pf = match self.freq_padding {
            FreqPadding::Same => (kf - 1) / 2,
            FreqPadding::Valid => 0,
        };
        ((kt - 1) / 2, pf)
    }

    pub fn output_bins(&self, bins: usize) -> usize {
        let (_, kf) = self.kernel();
        let (_, pf) = self.padding();
        (bins + 2 * pf + 1).saturating_sub(kf)
    }

    /// The real `[4 c_out, 4 c_in k_t k_f]` matrix with the Hamilton sign pattern.
    /// Row `4 o + p` is output channel `o`, component `p`; column
    /// `((4 i + q) k_t + dt) k_f + df` is input channel `i`, component `q`, tap `(dt, df)`.
    pub fn effective_matrix(&self) -> Array2<f64> {
        let (c_out, c_in, kt, kf) = self.banks[0].dim();
        let taps = kt * kf;
        let mut w = Array2::zeros((4 * c_out, 4 * c_in * taps));
        for o in 0..c_out {
            for (p, layout) in HAMILTON_LAYOUT.iter().enumerate() {
                for i in 0..c_in {
                    for (q, &(bank, sign)) in layout.iter().enumerate() {
                        for dt in 0..kt {
                            for df in 0..kf {
                                w[[4 * o + p, (4 * i + q) * taps + dt * kf + df]] =
                                    sign * self.banks[bank][[o, i, dt, df]];
                            }
                        }
                    }
                }
            }
        }
        w
    }

    fn check_input(&self, x: &QTensor) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        if self.output_bins(x.bins()) == 0 {
            return Err(Error::ShapeMismatch(format!("{} bins is narrower than the kernel", x.bins())));
        }
        Ok(())
    }

    fn im2col(&self, x: &QTensor, valid: &[usize]) -> Array2<f64> {
        let (kt, kf) = self.kernel();
        let (pt, pf) = self.padding();
        let (c_in, _, frames, bins) = x.data.dim();
        let f_out = self.output_bins(bins);
        let rows = 4 * c_in * kt * kf;
        let width = valid.len() * f_out;
        let src = x.data.as_slice().expect("standard layout");
        let mut cols = vec![0.0; rows * width];
        for plane in 0..4 * c_in {
            for dt in 0..kt {
                for df in 0..kf {
                    let row = (plane * kt + dt) * kf + df;
                    // output bin fo reads input bin fo + df - pf
                    let fo_lo = pf.saturating_sub(df);
                    let fo_hi = (bins + pf).saturating_sub(df).min(f_out);
                    if fo_lo >= fo_hi {
                        continue;
                    }
                    for (j, &t) in valid.iter().enumerate() {
                        let ti = t + dt;
                        if ti < pt || ti - pt >= frames || !x.mask[ti - pt] {
                            continue;
                        }
                        let ti = ti - pt;
                        let s0 = (plane * frames + ti) * bins + fo_lo + df - pf;
                        let d0 = row * width + j * f_out + fo_lo;
                        cols[d0..d0 + (fo_hi - fo_lo)].copy_from_slice(&src[s0..s0 + (fo_hi - fo_lo)]);
                    }
                }
            }
        }
        Array2::from_shape_vec((rows, width), cols).expect("sized above")
    }

    pub fn forward(&self, x: &QTensor) -> Result<QTensor> {
        self.check_input(x)?;
        let (_, _, frames, bins) = x.data.dim();
        let c_out = self.out_channels();
        let f_out = self.output_bins(bins);
        let valid: Vec<usize> = (0..frames).filter(|&t| x.mask[t]).collect();
        let mut out = Array4::zeros((c_out, 4, frames, f_out));
        if valid.is_empty() {
            return QTensor::new(out, x.mask.clone());
        }
        let cols = self.im2col(x, &valid);
        let y = self.effective_matrix().dot(&cols);
        let dst = out.as_slice_mut().expect("fresh array");
        for r in 0..4 * c_out {
            let b = self.bias[[r / 4, r % 4]];
            let yrow = y.row(r);
            let yrow = yrow.as_slice().expect("row-major product");
            for (j, &t) in valid.iter().enumerate() {
                let d0 = (r * frames + t) * f_out;
                for (d, &v) in dst[d0..d0 + f_out].iter_mut().zip(&yrow[j * f_out..(j + 1) * f_out]) {
                    *d = v + b;
                }
            }
        }
        QTensor::new(out, x.mask.clone())
    }

    /// Gradients given the forward input `x` and the output gradient `dy`.
    /// Returns `(dx, layer gradients)`; masked input frames get zero gradient.
    pub fn backward(&self, x: &QTensor, dy: &Array4<f64>) -> Result<(Array4<f64>, QConvLayer)> {
        self.check_input(x)?;
        let (c_in, _, frames, bins) = x.data.dim();
        let c_out = self.out_channels();
        let f_out = self.output_bins(bins);
        if dy.dim() != (c_out, 4, frames, f_out) {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} does not match [{c_out}, 4, {frames}, {f_out}]",
                dy.dim()
            )));
        }
        let (kt, kf) = self.kernel();
        let (pt, pf) = self.padding();
        let valid: Vec<usize> = (0..frames).filter(|&t| x.mask[t]).collect();
        let mut grads = self.zeros_like();
        let mut dx = Array4::zeros((c_in, 4, frames, bins));
        if valid.is_empty() {
            return Ok((dx, grads));
        }

        let width = valid.len() * f_out;
        let src = dy.as_slice().expect("standard layout");
        let mut dyv = Array2::zeros((4 * c_out, width));
        for r in 0..4 * c_out {
            for (j, &t) in valid.iter().enumerate() {
                let s0 = (r * frames + t) * f_out;
                for (fo, &g) in src[s0..s0 + f_out].iter().enumerate() {
                    dyv[[r, j * f_out + fo]] = g;
                }
            }
        }
        for r in 0..4 * c_out {
            grads.bias[[r / 4, r % 4]] = dyv.row(r).sum();
        }

        let cols = self.im2col(x, &valid);
        let dw = dyv.dot(&cols.t());
        let taps = kt * kf;
        for o in 0..c_out {
            for (p, layout) in HAMILTON_LAYOUT.iter().enumerate() {
                for i in 0..c_in {
                    for (q, &(bank, sign)) in layout.iter().enumerate() {
                        for dt in 0..kt {
                            for df in 0..kf {
                                grads.banks[bank][[o, i, dt, df]] +=
                                    sign * dw[[4 * o + p, (4 * i + q) * taps + dt * kf + df]];
                            }
                        }
                    }
                }
            }
        }

        let dcols = self.effective_matrix().t().dot(&dyv);
        let dst = dx.as_slice_mut().expect("fresh array");
        for plane in 0..4 * c_in {
            for dt in 0..kt {
                for df in 0..kf {
                    let row = (plane * kt + dt) * kf + df;
                    let fo_lo = pf.saturating_sub(df);
                    let fo_hi = (bins + pf).saturating_sub(df).min(f_out);
                    if fo_lo >= fo_hi {
                        continue;
                    }
                    let drow = dcols.row(row);
                    let drow = drow.as_slice().expect("row-major product");
                    for (j, &t) in valid.iter().enumerate() {
                        let ti = t + dt;
                        if ti < pt || ti - pt >= frames || !x.mask[ti - pt] {
                            continue;
                        }
                        let ti = ti - pt;
                        let d0 = (plane * frames + ti) * bins + fo_lo + df - pf;
                        let s0 = j * f_out + fo_lo;
                        for (d, &g) in dst[d0..d0 + (fo_hi - fo_lo)].iter_mut().zip(&drow[s0..s0 + (fo_hi - fo_lo)]) {
                            *d += g;
                        }
                    }
                }
            }
        }
        Ok((dx, grads))
    }
}

impl Parameters for QConvLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        for (name, bank) in BANK_NAMES.iter().zip(&self.banks) {
            visit_array(prefix, name, bank, f);
        }
        visit_array(prefix, "bias", &self.bias, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (name, bank) in BANK_NAMES.iter().zip(self.banks.iter_mut()) {
            visit_array_mut(prefix, name, bank, f);
        }
        visit_array_mut(prefix, "bias", &mut self.bias, f);
    }
}

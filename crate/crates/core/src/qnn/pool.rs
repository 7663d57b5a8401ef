use ndarray::Array4;

use super::QTensor;
use crate::error::{Error, Result};

/// Max pooling along frequency only, per component plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreqPool {
    pub win: usize,
    pub stride: usize,
}

/// Source bin of every pooled value, `[channels, 4, frames, out_bins]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolRoute {
    pub argmax: Array4<usize>,
    pub in_bins: usize,
}

impl FreqPool {
    pub fn new(win: usize, stride: usize) -> Result<Self> {
        if win == 0 || stride == 0 {
            return Err(Error::InvalidConfig("pool window and stride must be at least 1".into()));
        }
        Ok(FreqPool { win, stride })
    }

    pub fn output_bins(&self, bins: usize) -> usize {
        if bins < self.win {
            0
        } else {
            (bins - self.win) / self.stride + 1
        }
    }

    /// Ties go to the lowest frequency index.
    pub fn forward(&self, x: &QTensor) -> Result<(QTensor, PoolRoute)> {
        let (c, _, t, f) = x.data.dim();
        let f_out = self.output_bins(f);
        if f_out == 0 {
            return Err(Error::ShapeMismatch(format!("{f} bins is narrower than the pool window {}", self.win)));
        }
        let mut y = Array4::zeros((c, 4, t, f_out));
        let mut argmax = Array4::zeros((c, 4, t, f_out));
        let src = x.data.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("fresh array");
        let am = argmax.as_slice_mut().expect("fresh array");
        for (r, row) in src.chunks_exact(f).enumerate() {
            for fo in 0..f_out {
                let start = fo * self.stride;
                let mut best = start;
                for fi in start + 1..start + self.win {
                    if row[fi] > row[best] {
                        best = fi;
                    }
                }
                ys[r * f_out + fo] = row[best];
                am[r * f_out + fo] = best;
            }
        }
        Ok((
            QTensor { data: y, mask: x.mask.clone() },
            PoolRoute { argmax, in_bins: f },
        ))
    }

    /// Routes each output gradient to its argmax bin; masked frames get zero.
    pub fn backward(&self, route: &PoolRoute, mask: &[bool], dy: &Array4<f64>) -> Result<Array4<f64>> {
        if dy.dim() != route.argmax.dim() {
            return Err(Error::ShapeMismatch("pool gradient shape".into()));
        }
        let (c, _, t, f_out) = dy.dim();
        let f = route.in_bins;
        let mut dx = Array4::zeros((c, 4, t, f));
        let gs = dy.as_slice().expect("standard layout");
        let am = route.argmax.as_slice().expect("standard layout");
        let ds = dx.as_slice_mut().expect("fresh array");
        for r in 0..c * 4 * t {
            if !mask[r % t] {
                continue;
            }
            for fo in 0..f_out {
                ds[r * f + am[r * f_out + fo]] += gs[r * f_out + fo];
            }
        }
        Ok(dx)
    }
}

use ndarray::{Array2, Array4};

use super::QTensor;
use crate::error::{Error, Result};
use crate::params::{visit_array, visit_array_mut, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Quaternion batch normalisation: each (channel, component) plane is
/// normalised on its own over the valid positions of the whole batch.
///
/// `forward` never mutates the layer; train-mode batch statistics come back
/// in the cache and are folded into the running estimates by
/// [`QBatchNorm::commit`].
#[derive(Clone, Debug, PartialEq)]
pub struct QBatchNorm {
    /// `[channels, 4]`
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub running_mean: Array2<f64>,
    /// Unbiased running variance.
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BnCache {
    pub mode: Mode,
    pub xhat: Vec<Array4<f64>>,
    /// `1 / sqrt(var + eps)` per (channel, component).
    pub inv_std: Array2<f64>,
    pub batch_mean: Array2<f64>,
    /// Biased batch variance.
    pub batch_var: Array2<f64>,
    pub count: usize,
    pub masks: Vec<Vec<bool>>,
}

impl QBatchNorm {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        QBatchNorm {
            gamma: Array2::ones((channels, 4)),
            beta: Array2::zeros((channels, 4)),
            running_mean: Array2::zeros((channels, 4)),
            running_var: Array2::ones((channels, 4)),
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.gamma.fill(0.0);
        g.beta.fill(0.0);
        g
    }

    pub fn forward(&self, xs: &[QTensor], mode: Mode) -> Result<(Vec<QTensor>, BnCache)> {
        let channels = self.channels();
        for x in xs {
            if x.channels() != channels {
                return Err(Error::ShapeMismatch(format!(
                    "batch norm over {channels} channels got {}",
                    x.channels()
                )));
            }
        }
        let count: usize = xs.iter().map(|x| x.valid_frames() * x.bins()).sum();
        let planes = channels * 4;
        let (mean, var) = match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(Error::DegenerateBatch {
                        channel: 0,
                        component: 0,
                        count,
                    });
                }
                let mut sum = vec![0.0; planes];
                for x in xs {
                    for (p, row, _) in valid_rows(&x.data, &x.mask) {
                        sum[p] += row.iter().sum::<f64>();
                    }
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
                let mut sq = vec![0.0; planes];
                for x in xs {
                    for (p, row, _) in valid_rows(&x.data, &x.mask) {
                        let mu = mean[p];
                        sq[p] += row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                    }
                }
                let var = sq.iter().map(|s| s / count as f64).collect();
                (
                    Array2::from_shape_vec((channels, 4), mean).expect("sized"),
                    Array2::from_shape_vec((channels, 4), var).expect("sized"),
                )
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let flat = |a: &Array2<f64>| a.as_slice().expect("standard layout").to_vec();
        let (mu, is, g, b) = (flat(&mean), flat(&inv_std), flat(&self.gamma), flat(&self.beta));

        let mut outs = Vec::with_capacity(xs.len());
        let mut xhats = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xhat = Array4::zeros(x.data.raw_dim());
            let mut y = Array4::zeros(x.data.raw_dim());
            {
                let hs = xhat.as_slice_mut().expect("fresh array");
                let ys = y.as_slice_mut().expect("fresh array");
                for (p, row, off) in valid_rows(&x.data, &x.mask) {
                    for (j, &v) in row.iter().enumerate() {
                        let h = (v - mu[p]) * is[p];
                        hs[off + j] = h;
                        ys[off + j] = g[p] * h + b[p];
                    }
                }
            }
            outs.push(QTensor {
                data: y,
                mask: x.mask.clone(),
            });
            xhats.push(xhat);
        }
        Ok((
            outs,
            BnCache {
                mode,
                xhat: xhats,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                count,
                masks: xs.iter().map(|x| x.mask.clone()).collect(),
            },
        ))
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn commit(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Train || cache.count < 2 {
            return;
        }
        let m = self.momentum;
        let unbias = cache.count as f64 / (cache.count - 1) as f64;
        self.running_mean
            .zip_mut_with(&cache.batch_mean, |r, &b| *r = (1.0 - m) * *r + m * b);
        self.running_var
            .zip_mut_with(&cache.batch_var, |r, &b| *r = (1.0 - m) * *r + m * b * unbias);
    }

    /// Returns input gradients (zero at masked frames) and (gamma, beta) gradients.
    pub fn backward(&self, cache: &BnCache, dys: &[Array4<f64>]) -> Result<(Vec<Array4<f64>>, QBatchNorm)> {
        if dys.len() != cache.xhat.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} output gradients for a batch of {}",
                dys.len(),
                cache.xhat.len()
            )));
        }
        let planes = self.channels() * 4;
        let mut dgamma = vec![0.0; planes];
        let mut dbeta = vec![0.0; planes];
        for ((xhat, dy), mask) in cache.xhat.iter().zip(dys).zip(&cache.masks) {
            if dy.dim() != xhat.dim() {
                return Err(Error::ShapeMismatch("batch norm gradient shape".into()));
            }
            let hs = xhat.as_slice().expect("standard layout");
            for (p, row, off) in valid_rows(dy, mask) {
                dbeta[p] += row.iter().sum::<f64>();
                dgamma[p] += row.iter().zip(&hs[off..off + row.len()]).map(|(g, h)| g * h).sum::<f64>();
            }
        }
        let n = cache.count as f64;
        let gamma = self.gamma.as_slice().expect("standard layout");
        let inv_std = cache.inv_std.as_slice().expect("standard layout");
        let mut dxs = Vec::with_capacity(dys.len());
        for ((xhat, dy), mask) in cache.xhat.iter().zip(dys).zip(&cache.masks) {
            let mut dx = Array4::zeros(dy.raw_dim());
            let hs = xhat.as_slice().expect("standard layout");
            let ds = dx.as_slice_mut().expect("fresh array");
            for (p, row, off) in valid_rows(dy, mask) {
                let scale = gamma[p] * inv_std[p];
                let out = &mut ds[off..off + row.len()];
                match cache.mode {
                    Mode::Eval => out.iter_mut().zip(row).for_each(|(d, g)| *d = g * scale),
                    // dxhat = gamma dy; the sums of dxhat and dxhat*xhat are gamma * dbeta and gamma * dgamma
                    Mode::Train => {
                        let (mb, mg) = (dbeta[p] / n, dgamma[p] / n);
                        for ((d, g), h) in out.iter_mut().zip(row).zip(&hs[off..off + row.len()]) {
                            *d = scale * (g - mb - h * mg);
                        }
                    }
                }
            }
            dxs.push(dx);
        }
        let mut grads = self.zeros_like();
        grads.gamma = Array2::from_shape_vec((self.channels(), 4), dgamma).expect("sized");
        grads.beta = Array2::from_shape_vec((self.channels(), 4), dbeta).expect("sized");
        Ok((dxs, grads))
    }
}

/// `(plane, row values, flat offset)` of every valid frame row of a
/// `[C, 4, T, F]` array, plane being `c * 4 + k`.
fn valid_rows<'a>(a: &'a Array4<f64>, mask: &'a [bool]) -> impl Iterator<Item = (usize, &'a [f64], usize)> + 'a {
    let (c, _, t, f) = a.dim();
    let data = a.as_slice().expect("standard layout");
    (0..c * 4).flat_map(move |p| {
        (0..t).filter(move |&ti| mask[ti]).map(move |ti| {
            let off = (p * t + ti) * f;
            (p, &data[off..off + f], off)
        })
    })
}

impl Parameters for QBatchNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        visit_array(prefix, "gamma", &self.gamma, f);
        visit_array(prefix, "beta", &self.beta, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_array_mut(prefix, "gamma", &mut self.gamma, f);
        visit_array_mut(prefix, "beta", &mut self.beta, f);
    }

    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        visit_array(prefix, "running_mean", &self.running_mean, f);
        visit_array(prefix, "running_var", &self.running_var, f);
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_array_mut(prefix, "running_mean", &mut self.running_mean, f);
        visit_array_mut(prefix, "running_var", &mut self.running_var, f);
    }
}

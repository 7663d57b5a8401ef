//! Dense building blocks shared by the latent, alignment and fusion layers.
//!
//! Batches are row-major: one example (or token) per row.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::params::{visit_array, visit_array_mut, Parameters};

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * phi_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    phi_cdf(x) + x * pdf
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `y = x W^T + b` with `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Option<Array1<f64>>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize, bias: bool) -> Self {
        Linear {
            w: Array2::zeros((output, input)),
            b: bias.then(|| Array1::zeros(output)),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, bias: bool, rng: &mut R) -> Self {
        let mut l = Self::zeros(input, output, bias);
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        l.w.iter_mut().for_each(|w| *w = dist.sample(rng));
        l
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim(), self.b.is_some())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "linear layer expects width {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut y = x.dot(&self.w.t());
        if let Some(b) = &self.b {
            y += b;
        }
        Ok(y)
    }

    /// Returns `(dx, grads)` for forward input `x` and output gradient `dy`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>) -> Result<(Array2<f64>, Linear)> {
        if dy.ncols() != self.output_dim() || dy.nrows() != x.nrows() {
            return Err(Error::ShapeMismatch("linear gradient shape".into()));
        }
        let grads = Linear {
            w: dy.t().dot(x),
            b: self.b.as_ref().map(|_| dy.sum_axis(Axis(0))),
        };
        Ok((dy.dot(&self.w), grads))
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        visit_array(prefix, "W", &self.w, f);
        if let Some(b) = &self.b {
            visit_array(prefix, "b", b, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_array_mut(prefix, "W", &mut self.w, f);
        if let Some(b) = &mut self.b {
            visit_array_mut(prefix, "b", b, f);
        }
    }
}

/// Row-wise layer normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize, eps: f64) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            eps,
        }
    }

    pub fn zeros_like(&self) -> Self {
        LayerNorm {
            gamma: Array1::zeros(self.gamma.len()),
            beta: Array1::zeros(self.beta.len()),
            eps: self.eps,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, LayerNormCache)> {
        let d = self.gamma.len();
        if x.ncols() != d {
            return Err(Error::ShapeMismatch(format!("layer norm expects width {d}, got {}", x.ncols())));
        }
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            *s = 1.0 / (var + self.eps).sqrt();
            let is = *s;
            row.mapv_inplace(|v| (v - mean) * is);
        }
        let y = &xhat * &self.gamma + &self.beta;
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Array2<f64>) -> Result<(Array2<f64>, LayerNorm)> {
        if dy.dim() != cache.xhat.dim() {
            return Err(Error::ShapeMismatch("layer norm gradient shape".into()));
        }
        let d = self.gamma.len() as f64;
        let mut grads = self.zeros_like();
        grads.gamma = (dy * &cache.xhat).sum_axis(Axis(0));
        grads.beta = dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
            let g = dxhat.row(i);
            let h = cache.xhat.row(i);
            let mean_g = g.sum() / d;
            let mean_gh = g.dot(&h) / d;
            for (j, v) in row.iter_mut().enumerate() {
                *v = cache.inv_std[i] * (g[j] - mean_g - h[j] * mean_gh);
            }
        }
        Ok((dx, grads))
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        visit_array(prefix, "gamma", &self.gamma, f);
        visit_array(prefix, "beta", &self.beta, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_array_mut(prefix, "gamma", &mut self.gamma, f);
        visit_array_mut(prefix, "beta", &mut self.beta, f);
    }
}

use ndarray::{s, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{softmax, Linear};
use crate::params::{join, Parameters};

/// Multi-head self-attention with biased query/key/value/output projections.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    pub x: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Attention weights per head, each `[tokens, tokens]`.
    pub probs: Vec<Array2<f64>>,
    pub context: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn init<R: Rng + ?Sized>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::InvalidConfig(format!("width {dim} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            heads,
            q: Linear::init(dim, dim, true, rng),
            k: Linear::init(dim, dim, true, rng),
            v: Linear::init(dim, dim, true, rng),
            o: Linear::init(dim, dim, true, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        MultiHeadAttention {
            heads: self.heads,
            q: self.q.zeros_like(),
            k: self.k.zeros_like(),
            v: self.v.zeros_like(),
            o: self.o.zeros_like(),
        }
    }

    fn head_dim(&self) -> usize {
        self.q.output_dim() / self.heads
    }

    /// `x` is `[tokens, dim]`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, AttentionCache)> {
        let q = self.q.forward(x)?;
        let k = self.k.forward(x)?;
        let v = self.v.forward(x)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut context = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let mut p = scores.clone();
            for mut row in p.rows_mut() {
                let sm = softmax(&row.to_vec());
                row.iter_mut().zip(sm).for_each(|(a, b)| *a = b);
            }
            context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let y = self.o.forward(&context)?;
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                context,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Array2<f64>) -> Result<(Array2<f64>, MultiHeadAttention)> {
        let (dctx, g_o) = self.o.backward(&cache.context, dy)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dc = dctx.slice(cols);
            let dp = dc.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dc));
            let mut dscores = Array2::zeros(p.raw_dim());
            for i in 0..p.nrows() {
                let dot: f64 = p.row(i).dot(&dp.row(i));
                for j in 0..p.ncols() {
                    dscores[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot) * scale;
                }
            }
            dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
        }
        let (dx_q, g_q) = self.q.backward(&cache.x, &dq)?;
        let (dx_k, g_k) = self.k.backward(&cache.x, &dk)?;
        let (dx_v, g_v) = self.v.backward(&cache.x, &dv)?;
        Ok((
            dx_q + dx_k + dx_v,
            MultiHeadAttention {
                heads: self.heads,
                q: g_q,
                k: g_k,
                v: g_v,
                o: g_o,
            },
        ))
    }
}

impl Parameters for MultiHeadAttention {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.o.visit(&join(prefix, "o"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.q.visit_mut(&join(prefix, "q"), f);
        self.k.visit_mut(&join(prefix, "k"), f);
        self.v.visit_mut(&join(prefix, "v"), f);
        self.o.visit_mut(&join(prefix, "o"), f);
    }
}

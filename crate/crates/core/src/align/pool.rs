use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::params::{visit_array, visit_array_mut, Parameters};
use crate::seq::FrameSeq;

/// Score given to masked frames before the softmax.
pub const MASKED_SCORE: f64 = -1e9;

/// Frame scores `s_t = w . g_t + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionPool {
    pub w: Array1<f64>,
    /// Length 1.
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolOutput {
    pub z: Array1<f64>,
    /// Attention weights over all frames; exactly zero where masked.
    pub alpha: Vec<f64>,
}

impl AttentionPool {
    /// Zero scores: starts out as a mean over valid frames.
    pub fn new(dim: usize) -> Self {
        AttentionPool {
            w: Array1::zeros(dim),
            b: Array1::zeros(1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::new(self.w.len())
    }

    pub fn forward(&self, seq: &FrameSeq) -> Result<PoolOutput> {
        masked_attention_pool(&seq.values, &seq.mask, self)
    }

    /// Returns `(d seq, grads)` for the pooled-vector gradient `dz`.
    pub fn backward(&self, seq: &FrameSeq, out: &PoolOutput, dz: &Array1<f64>) -> Result<(Array2<f64>, AttentionPool)> {
        if dz.len() != seq.dim() {
            return Err(Error::ShapeMismatch("pooled gradient width".into()));
        }
        let g = &seq.values;
        let dalpha: Vec<f64> = g.rows().into_iter().map(|row| row.dot(dz)).collect();
        let mean: f64 = out.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let ds: Vec<f64> = out.alpha.iter().zip(&dalpha).map(|(a, d)| a * (d - mean)).collect();
        let mut grads = self.zeros_like();
        let mut dg = Array2::zeros(g.raw_dim());
        for (t, mut row) in dg.rows_mut().into_iter().enumerate() {
            if !seq.mask[t] {
                continue;
            }
            grads.w.scaled_add(ds[t], &g.row(t));
            grads.b[0] += ds[t];
            row.assign(&(dz * out.alpha[t] + &self.w * ds[t]));
        }
        Ok((dg, grads))
    }
}

pub fn masked_attention_pool(seq: &Array2<f64>, mask: &[bool], p: &AttentionPool) -> Result<PoolOutput> {
    if seq.ncols() != p.w.len() || mask.len() != seq.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "pooling {:?} with mask {} and weights {}",
            seq.dim(),
            mask.len(),
            p.w.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptySequence);
    }
    let scores: Vec<f64> = seq
        .rows()
        .into_iter()
        .zip(mask)
        .map(|(row, &valid)| if valid { row.dot(&p.w) + p.b[0] } else { MASKED_SCORE })
        .collect();
    let alpha = softmax(&scores);
    let mut z = Array1::zeros(seq.ncols());
    for (row, &a) in seq.rows().into_iter().zip(&alpha) {
        if a != 0.0 {
            z.scaled_add(a, &row);
        }
    }
    Ok(PoolOutput { z, alpha })
}

impl Parameters for AttentionPool {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        visit_array(prefix, "w", &self.w, f);
        visit_array(prefix, "b", &self.b, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_array_mut(prefix, "w", &mut self.w, f);
        visit_array_mut(prefix, "b", &mut self.b, f);
    }
}

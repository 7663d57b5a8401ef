use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;

use super::{AttentionCache, MultiHeadAttention};
use crate::error::{Error, Result};
use crate::nn::{gelu, gelu_grad, LayerNorm, LayerNormCache, Linear};
use crate::params::{join, Parameters};

#[derive(Clone, Debug, PartialEq)]
pub struct FusionConfig {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// FFN hidden width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub ln_eps: f64,
    pub classifier_hidden: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            d_model: 256,
            heads: 4,
            layers: 1,
            ffn_mult: 4,
            ln_eps: 1e-5,
            classifier_hidden: 128,
        }
    }
}

/// Pre-norm block: `U = MHA(LN(Z)) + Z`, `Z' = FFN(LN(U)) + U`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionLayer {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ffn1: Linear,
    pub ffn2: Linear,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    ffn_in: Array2<f64>,
    ffn_pre: Array2<f64>,
    ffn_hidden: Array2<f64>,
}

impl FusionLayer {
    pub fn init<R: Rng + ?Sized>(cfg: &FusionConfig, rng: &mut R) -> Result<Self> {
        let d = cfg.d_model;
        Ok(FusionLayer {
            ln1: LayerNorm::new(d, cfg.ln_eps),
            attn: MultiHeadAttention::init(d, cfg.heads, rng)?,
            ln2: LayerNorm::new(d, cfg.ln_eps),
            ffn1: Linear::init(d, cfg.ffn_mult * d, true, rng),
            ffn2: Linear::init(cfg.ffn_mult * d, d, true, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        FusionLayer {
            ln1: self.ln1.zeros_like(),
            attn: self.attn.zeros_like(),
            ln2: self.ln2.zeros_like(),
            ffn1: self.ffn1.zeros_like(),
            ffn2: self.ffn2.zeros_like(),
        }
    }

    pub fn forward(&self, z: &Array2<f64>) -> Result<(Array2<f64>, LayerCache)> {
        let (a, ln1) = self.ln1.forward(z)?;
        let (attn_out, attn) = self.attn.forward(&a)?;
        let u = z + &attn_out;
        let (ffn_in, ln2) = self.ln2.forward(&u)?;
        let ffn_pre = self.ffn1.forward(&ffn_in)?;
        let ffn_hidden = ffn_pre.mapv(gelu);
        let out = &u + &self.ffn2.forward(&ffn_hidden)?;
        Ok((
            out,
            LayerCache {
                ln1,
                attn,
                ln2,
                ffn_in,
                ffn_pre,
                ffn_hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &LayerCache, dout: &Array2<f64>) -> Result<(Array2<f64>, FusionLayer)> {
        let (dh, g_ffn2) = self.ffn2.backward(&cache.ffn_hidden, dout)?;
        let dpre = dh * cache.ffn_pre.mapv(gelu_grad);
        let (dffn_in, g_ffn1) = self.ffn1.backward(&cache.ffn_in, &dpre)?;
        let (du_ln, g_ln2) = self.ln2.backward(&cache.ln2, &dffn_in)?;
        let du = dout + &du_ln;
        let (da, g_attn) = self.attn.backward(&cache.attn, &du)?;
        let (dz_ln, g_ln1) = self.ln1.backward(&cache.ln1, &da)?;
        Ok((
            du + dz_ln,
            FusionLayer {
                ln1: g_ln1,
                attn: g_attn,
                ln2: g_ln2,
                ffn1: g_ffn1,
                ffn2: g_ffn2,
            },
        ))
    }
}

impl Parameters for FusionLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.ln1.visit(&join(prefix, "ln1"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.ln2.visit(&join(prefix, "ln2"), f);
        self.ffn1.visit(&join(prefix, "ffn1"), f);
        self.ffn2.visit(&join(prefix, "ffn2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.ln1.visit_mut(&join(prefix, "ln1"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.ln2.visit_mut(&join(prefix, "ln2"), f);
        self.ffn1.visit_mut(&join(prefix, "ffn1"), f);
        self.ffn2.visit_mut(&join(prefix, "ffn2"), f);
    }
}

/// Stack of pre-norm layers over the fixed token order `[latent, vocal]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionEncoder {
    pub layers: Vec<FusionLayer>,
}

#[derive(Clone, Debug)]
pub struct FusionCache {
    layers: Vec<LayerCache>,
}

impl FusionEncoder {
    pub fn init<R: Rng + ?Sized>(cfg: &FusionConfig, rng: &mut R) -> Result<Self> {
        if cfg.layers == 0 {
            return Err(Error::InvalidConfig("fusion needs at least one layer".into()));
        }
        let layers = (0..cfg.layers).map(|_| FusionLayer::init(cfg, rng)).collect::<Result<_>>()?;
        Ok(FusionEncoder { layers })
    }

    pub fn d_model(&self) -> usize {
        self.layers[0].ln1.gamma.len()
    }

    pub fn zeros_like(&self) -> Self {
        FusionEncoder {
            layers: self.layers.iter().map(FusionLayer::zeros_like).collect(),
        }
    }

    /// Runs the stack on `[z_latent; z_vocal]` and returns the first output token.
    pub fn fuse(&self, z_latent: &Array1<f64>, z_vocal: &Array1<f64>) -> Result<(Array1<f64>, FusionCache)> {
        let d = self.d_model();
        if z_latent.len() != d || z_vocal.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "fusion expects two width-{d} vectors, got {} and {}",
                z_latent.len(),
                z_vocal.len()
            )));
        }
        let mut z = concatenate(
            Axis(0),
            &[z_latent.view().insert_axis(Axis(0)), z_vocal.view().insert_axis(Axis(0))],
        )
        .expect("equal widths");
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&z)?;
            caches.push(cache);
            z = next;
        }
        Ok((z.row(0).to_owned(), FusionCache { layers: caches }))
    }

    /// Gradients on `(z_latent, z_vocal)` and parameters from a gradient on the fused vector.
    pub fn backward(&self, cache: &FusionCache, dfused: &Array1<f64>) -> Result<(Array1<f64>, Array1<f64>, FusionEncoder)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::MissingForwardCache("fusion cache depth".into()));
        }
        let mut dz = Array2::zeros((2, self.d_model()));
        dz.row_mut(0).assign(dfused);
        let mut grads = self.zeros_like();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (d, g) = layer.backward(&cache.layers[l], &dz)?;
            grads.layers[l] = g;
            dz = d;
        }
        Ok((dz.row(0).to_owned(), dz.row(1).to_owned(), grads))
    }
}

impl Parameters for FusionEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layer{l}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layer{l}")), f);
        }
    }
}

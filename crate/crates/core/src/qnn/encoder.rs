use ndarray::{Array2, Array4};
use rand::Rng;

use super::{BlockCache, FreqPadding, FreqPool, Mode, QBatchNorm, QConvLayer, QRelu, QTensor, QseBlock};
use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::seq::FrameSeq;

#[derive(Clone, Debug, PartialEq)]
pub struct QseConfig {
    /// Output quaternion channels of each block; the length is the depth.
    pub channels: Vec<usize>,
    /// `(k_t, k_f)`
    pub kernel: (usize, usize),
    pub pool_win: usize,
    pub pool_stride: usize,
    pub relu_eps: f64,
    pub relu_theta: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    /// Frequency padding of every block after the first (the first always uses `Same`).
    pub later_padding: FreqPadding,
}

impl Default for QseConfig {
    fn default() -> Self {
        QseConfig {
            channels: vec![8; 4],
            kernel: (3, 3),
            pool_win: 2,
            pool_stride: 2,
            relu_eps: 1e-4,
            relu_theta: 0.0,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            later_padding: FreqPadding::Same,
        }
    }
}

impl QseConfig {
    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidConfig("encoder needs at least one block and nonzero widths".into()));
        }
        if self.pool_win == 0 || self.pool_stride == 0 {
            return Err(Error::InvalidConfig("pool window and stride must be at least 1".into()));
        }
        QRelu::with_threshold(self.relu_eps, self.relu_theta)?;
        if !(self.bn_eps >= 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidConfig("batch norm eps must be >= 0 and momentum in [0, 1]".into()));
        }
        Ok(())
    }

    /// Frequency bins left after every block, for `bins` input bins.
    pub fn output_bins(&self, bins: usize) -> Result<usize> {
        let enc = QseEncoder::zeros(self)?;
        let mut f = bins;
        for block in &enc.blocks {
            f = block.output_bins(f);
            if f == 0 {
                return Err(Error::InvalidConfig(format!("{bins} bins collapse to nothing inside the encoder")));
            }
        }
        Ok(f)
    }

    /// Width `D = C_L * 4 * F_L` of each output frame.
    pub fn embedding_dim(&self, bins: usize) -> Result<usize> {
        Ok(self.channels.last().copied().unwrap_or(0) * 4 * self.output_bins(bins)?)
    }
}

/// Stack of quaternion blocks turning a standardised quartet into a frame sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct QseEncoder {
    pub blocks: Vec<QseBlock>,
}

/// Per-block activations from a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct QseTrace {
    pub blocks: Vec<BlockCache>,
    /// Output shape `(channels, bins)` of the last block.
    pub out_shape: (usize, usize),
}

impl QseEncoder {
    fn build(cfg: &QseConfig, mut conv: impl FnMut(usize, usize, FreqPadding) -> Result<QConvLayer>) -> Result<Self> {
        cfg.validate()?;
        let relu = QRelu::with_threshold(cfg.relu_eps, cfg.relu_theta)?;
        let pool = FreqPool::new(cfg.pool_win, cfg.pool_stride)?;
        let mut c_in = 1;
        let mut blocks = Vec::with_capacity(cfg.depth());
        for (l, &c_out) in cfg.channels.iter().enumerate() {
            let padding = if l == 0 { FreqPadding::Same } else { cfg.later_padding };
            blocks.push(QseBlock {
                conv: conv(c_in, c_out, padding)?,
                bn: QBatchNorm::new(c_out, cfg.bn_momentum, cfg.bn_eps),
                relu,
                pool,
            });
            c_in = c_out;
        }
        Ok(QseEncoder { blocks })
    }

    pub fn zeros(cfg: &QseConfig) -> Result<Self> {
        let (kt, kf) = cfg.kernel;
        Self::build(cfg, |ci, co, pad| QConvLayer::zeros(ci, co, kt, kf, pad))
    }

    pub fn init<R: Rng + ?Sized>(cfg: &QseConfig, rng: &mut R) -> Result<Self> {
        let (kt, kf) = cfg.kernel;
        Self::build(cfg, |ci, co, pad| QConvLayer::init(ci, co, kt, kf, pad, rng))
    }

    pub fn zeros_like(&self) -> Self {
        QseEncoder {
            blocks: self.blocks.iter().map(QseBlock::zeros_like).collect(),
        }
    }

    /// Inference-mode encoding (running statistics, no cache).
    pub fn encode(&self, xs: &[QTensor]) -> Result<Vec<FrameSeq>> {
        let mut h = xs.to_vec();
        for block in &self.blocks {
            h = block.forward(&h, Mode::Eval)?.0;
        }
        h.iter().map(vectorize).collect()
    }

    pub fn forward(&self, xs: &[QTensor], mode: Mode) -> Result<(Vec<FrameSeq>, QseTrace)> {
        if xs.is_empty() {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        let mut h = xs.to_vec();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h, mode)?;
            caches.push(cache);
            h = next;
        }
        let out_shape = (h[0].channels(), h[0].bins());
        let seqs = h.iter().map(vectorize).collect::<Result<Vec<_>>>()?;
        Ok((seqs, QseTrace { blocks: caches, out_shape }))
    }

    /// Folds the batch statistics of a training forward pass into every block's running estimates.
    pub fn commit(&mut self, trace: &QseTrace) {
        for (block, cache) in self.blocks.iter_mut().zip(&trace.blocks) {
            block.bn.commit(&cache.bn);
        }
    }

    /// Parameter gradients from gradients on the output sequences.
    pub fn backward(&self, trace: &QseTrace, d_seq: &[Array2<f64>]) -> Result<QseEncoder> {
        Ok(self.backward_with_input(trace, d_seq)?.0)
    }

    pub fn backward_with_input(&self, trace: &QseTrace, d_seq: &[Array2<f64>]) -> Result<(QseEncoder, Vec<Array4<f64>>)> {
        if trace.blocks.len() != self.blocks.len() {
            return Err(Error::MissingForwardCache(format!(
                "trace holds {} blocks, encoder has {}",
                trace.blocks.len(),
                self.blocks.len()
            )));
        }
        let (c, f) = trace.out_shape;
        let mut d = d_seq
            .iter()
            .map(|g| unvectorize(g, c, f))
            .collect::<Result<Vec<_>>>()?;
        let mut grads = self.zeros_like();
        for (l, block) in self.blocks.iter().enumerate().rev() {
            let (dx, g) = block.backward(&trace.blocks[l], &d)?;
            grads.blocks[l] = g;
            d = dx;
        }
        Ok((grads, d))
    }
}

/// `G[t, (c * 4 + k) * F + f] = Q[c, k, t, f]`.
pub fn vectorize(q: &QTensor) -> Result<FrameSeq> {
    let (c, _, t, f) = q.data.dim();
    let mut g = Array2::zeros((t, c * 4 * f));
    for ((ci, k, ti, fi), &v) in q.data.indexed_iter() {
        g[[ti, (ci * 4 + k) * f + fi]] = v;
    }
    FrameSeq::new(g, q.mask.clone())
}

fn unvectorize(g: &Array2<f64>, c: usize, f: usize) -> Result<Array4<f64>> {
    if g.ncols() != c * 4 * f {
        return Err(Error::ShapeMismatch(format!("sequence gradient width {} != {}", g.ncols(), c * 4 * f)));
    }
    let t = g.nrows();
    Ok(Array4::from_shape_fn((c, 4, t, f), |(ci, k, ti, fi)| g[[ti, (ci * 4 + k) * f + fi]]))
}

impl Parameters for QseEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        for (l, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{l}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{l}")), f);
        }
    }

    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        for (l, b) in self.blocks.iter().enumerate() {
            b.visit_buffers(&join(prefix, &format!("block{l}")), f);
        }
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, b) in self.blocks.iter_mut().enumerate() {
            b.visit_buffers_mut(&join(prefix, &format!("block{l}")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients_sampled, check_input_gradient};
    use crate::params::param_count;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, frames: usize, bins: usize, valid: usize) -> QTensor {
        let data = Array4::from_shape_fn((1, 4, frames, bins), |_| rng.random_range(-1.0..1.0));
        QTensor::new(data, (0..frames).map(|t| t < valid).collect()).unwrap()
    }

    #[test]
    fn default_dimensions() {
        let cfg = QseConfig::default();
        assert_eq!(cfg.output_bins(257).unwrap(), 16);
        assert_eq!(cfg.embedding_dim(257).unwrap(), 512);
        let valid = QseConfig { later_padding: FreqPadding::Valid, ..QseConfig::default() };
        assert_eq!(valid.embedding_dim(257).unwrap(), 8 * 4 * 14);
        let enc = QseEncoder::zeros(&cfg).unwrap();
        let mut names = Vec::new();
        enc.visit("qse", &mut |n, _, _| names.push(n.to_string()));
        assert_eq!(names[0], "qse.block0.W_M");
        assert!(names.contains(&"qse.block3.bn.gamma".to_string()));
    }

    #[test]
    fn time_length_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = QseConfig { channels: vec![2, 3], ..QseConfig::default() };
        let enc = QseEncoder::init(&cfg, &mut rng).unwrap();
        let xs = vec![random(&mut rng, 7, 17, 7), random(&mut rng, 7, 17, 4)];
        let (seqs, _) = enc.forward(&xs, Mode::Train).unwrap();
        for (s, x) in seqs.iter().zip(&xs) {
            assert_eq!(s.frames(), 7);
            assert_eq!(s.dim(), cfg.embedding_dim(17).unwrap());
            assert_eq!(s.mask, x.mask);
        }
        assert!(seqs[1].values.rows().into_iter().skip(4).all(|r| r.iter().all(|&v| v == 0.0)));
        let again = enc.encode(&xs).unwrap();
        assert_eq!(again, enc.encode(&xs).unwrap());
    }

    #[test]
    fn single_identity_block_is_reshaped_qrelu() {
        let cfg = QseConfig {
            channels: vec![1],
            kernel: (1, 1),
            pool_win: 1,
            pool_stride: 1,
            bn_eps: 0.0,
            ..QseConfig::default()
        };
        let mut enc = QseEncoder::zeros(&cfg).unwrap();
        enc.blocks[0].conv.banks[0][[0, 0, 0, 0]] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 3, 5, 3);
        let g = enc.encode(std::slice::from_ref(&x)).unwrap();
        let expected = vectorize(&enc.blocks[0].relu.forward(&x)).unwrap();
        assert_eq!(g[0], expected);
        assert_eq!(g[0].values[[1, 2 * 5 + 3]], expected.values[[1, 13]]);
    }

    #[test]
    fn missing_cache() {
        let cfg = QseConfig { channels: vec![1, 1], ..QseConfig::default() };
        let enc = QseEncoder::zeros(&cfg).unwrap();
        let trace = QseTrace { blocks: Vec::new(), out_shape: (1, 4) };
        assert!(matches!(enc.backward(&trace, &[]), Err(Error::MissingForwardCache(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = QseConfig {
            channels: vec![2, 2],
            kernel: (3, 3),
            pool_win: 2,
            pool_stride: 2,
            later_padding: FreqPadding::Valid,
            ..QseConfig::default()
        };
        let mut enc = QseEncoder::init(&cfg, &mut rng).unwrap();
        for b in &mut enc.blocks {
            b.conv.bias.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
            b.bn.gamma.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
            b.bn.beta.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        let xs = vec![random(&mut rng, 4, 10, 4), random(&mut rng, 4, 10, 3)];
        let (seqs, trace) = enc.forward(&xs, Mode::Train).unwrap();
        let probes: Vec<Array2<f64>> = seqs
            .iter()
            .map(|s| Array2::from_shape_fn(s.values.dim(), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let loss = |e: &QseEncoder, xs: &[QTensor]| {
            let (s, _) = e.forward(xs, Mode::Train).unwrap();
            s.iter().zip(&probes).map(|(a, p)| (&a.values * p).sum()).sum::<f64>()
        };
        let (grads, dx) = enc.backward_with_input(&trace, &probes).unwrap();
        assert_eq!(param_count(&grads), param_count(&enc));
        check_gradients_sampled(&enc, &grads, |e| loss(e, &xs), 1e-4, 40).unwrap();

        let flat: Vec<f64> = xs.iter().flat_map(|x| x.data.iter().copied()).collect();
        let analytic: Vec<f64> = dx.iter().flat_map(|d| d.iter().copied()).collect();
        let rebuild = |v: &[f64]| {
            let n = xs[0].data.len();
            vec![
                QTensor::new(Array4::from_shape_vec(xs[0].data.raw_dim(), v[..n].to_vec()).unwrap(), xs[0].mask.clone()).unwrap(),
                QTensor::new(Array4::from_shape_vec(xs[1].data.raw_dim(), v[n..].to_vec()).unwrap(), xs[1].mask.clone()).unwrap(),
            ]
        };
        check_input_gradient(&flat, &analytic, |v| loss(&enc, &rebuild(v)), 1e-4).unwrap();
    }
}

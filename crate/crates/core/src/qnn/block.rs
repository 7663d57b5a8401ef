use ndarray::Array4;

use super::{BnCache, FreqPool, Mode, PoolRoute, QBatchNorm, QConvLayer, QRelu, QTensor};
use crate::error::{Error, Result};
use crate::par;
use crate::params::{accumulate, join, Parameters};

/// conv -> batch norm -> qReLU -> frequency pool.
#[derive(Clone, Debug, PartialEq)]
pub struct QseBlock {
    pub conv: QConvLayer,
    pub bn: QBatchNorm,
    pub relu: QRelu,
    pub pool: FreqPool,
}

/// Activations a block keeps for its backward pass.
#[derive(Clone, Debug)]
pub struct BlockCache {
    pub inputs: Vec<QTensor>,
    pub bn: BnCache,
    pub bn_out: Vec<QTensor>,
    pub routes: Vec<PoolRoute>,
}

impl QseBlock {
    pub fn zeros_like(&self) -> Self {
        QseBlock {
            conv: self.conv.zeros_like(),
            bn: self.bn.zeros_like(),
            relu: self.relu,
            pool: self.pool,
        }
    }

    pub fn output_bins(&self, bins: usize) -> usize {
        self.pool.output_bins(self.conv.output_bins(bins))
    }

    pub fn forward(&self, xs: &[QTensor], mode: Mode) -> Result<(Vec<QTensor>, BlockCache)> {
        let conv = par::try_map(xs, |x| self.conv.forward(x))?;
        let (bn_out, bn) = self.bn.forward(&conv, mode)?;
        drop(conv);
        let pooled = par::try_map(&bn_out, |h| {
            let (mut y, route) = self.pool.forward(&self.relu.forward(h))?;
            y.zero_masked();
            Ok::<_, Error>((y, route))
        })?;
        let (outs, routes) = pooled.into_iter().unzip();
        Ok((
            outs,
            BlockCache {
                inputs: xs.to_vec(),
                bn,
                bn_out,
                routes,
            },
        ))
    }

    /// Input gradients and parameter gradients (reduced in batch order).
    pub fn backward(&self, cache: &BlockCache, dys: &[Array4<f64>]) -> Result<(Vec<Array4<f64>>, QseBlock)> {
        if dys.len() != cache.inputs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradients for a batch of {}",
                dys.len(),
                cache.inputs.len()
            )));
        }
        let idx: Vec<usize> = (0..dys.len()).collect();
        let d_bn = par::try_map(&idx, |&i| {
            let h = &cache.bn_out[i];
            let d_relu = self.pool.backward(&cache.routes[i], &h.mask, &dys[i])?;
            self.relu.backward(h, &d_relu)
        })?;
        let (d_conv, bn_grads) = self.bn.backward(&cache.bn, &d_bn)?;
        let conv_parts = par::try_map(&idx, |&i| self.conv.backward(&cache.inputs[i], &d_conv[i]))?;
        let mut grads = self.zeros_like();
        grads.bn = bn_grads;
        let mut dxs = Vec::with_capacity(conv_parts.len());
        for (dx, g) in conv_parts {
            accumulate(&mut grads.conv, &g);
            dxs.push(dx);
        }
        Ok((dxs, grads))
    }
}

impl Parameters for QseBlock {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.conv.visit(prefix, f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.conv.visit_mut(prefix, f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }

    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.bn.visit_buffers(&join(prefix, "bn"), f);
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.bn.visit_buffers_mut(&join(prefix, "bn"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnn::FreqPadding;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, c: usize, frames: usize, bins: usize, valid: usize) -> QTensor {
        let data = Array4::from_shape_fn((c, 4, frames, bins), |_| rng.random_range(-1.0..1.0));
        QTensor::new(data, (0..frames).map(|t| t < valid).collect()).unwrap()
    }

    fn identity_block() -> QseBlock {
        let mut conv = QConvLayer::zeros(1, 1, 1, 1, FreqPadding::Same).unwrap();
        conv.banks[0][[0, 0, 0, 0]] = 1.0;
        let bn = QBatchNorm::new(1, 0.1, 0.0);
        QseBlock {
            conv,
            bn,
            relu: QRelu::new(1e-4).unwrap(),
            pool: FreqPool::new(1, 1).unwrap(),
        }
    }

    #[test]
    fn identity_block_is_qrelu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 1, 4, 5, 3);
        let block = identity_block();
        let (y, _) = block.forward(std::slice::from_ref(&x), Mode::Eval).unwrap();
        assert_eq!(y[0], block.relu.forward(&x));
    }

    #[test]
    fn zero_input_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let block = QseBlock {
            conv: QConvLayer::init(1, 2, 3, 3, FreqPadding::Same, &mut rng).unwrap(),
            bn: QBatchNorm::new(2, 0.1, 1e-5),
            relu: QRelu::new(1e-4).unwrap(),
            pool: FreqPool::new(2, 2).unwrap(),
        };
        let x = QTensor::zeros(1, 4, 6, vec![true; 4]);
        for mode in [Mode::Train, Mode::Eval] {
            let (y, _) = block.forward(std::slice::from_ref(&x), mode).unwrap();
            assert!(y[0].data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn matches_composed_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = QseBlock {
            conv: QConvLayer::init(2, 2, 3, 3, FreqPadding::Valid, &mut rng).unwrap(),
            bn: QBatchNorm::new(2, 0.1, 1e-5),
            relu: QRelu::new(1e-4).unwrap(),
            pool: FreqPool::new(2, 2).unwrap(),
        };
        let xs = vec![random(&mut rng, 2, 5, 8, 5), random(&mut rng, 2, 4, 8, 2)];
        let (ys, _) = block.forward(&xs, Mode::Train).unwrap();
        let conv: Vec<QTensor> = xs.iter().map(|x| block.conv.forward(x).unwrap()).collect();
        let (bn, _) = block.bn.forward(&conv, Mode::Train).unwrap();
        for (y, h) in ys.iter().zip(&bn) {
            let (p, _) = block.pool.forward(&block.relu.forward(h)).unwrap();
            assert_eq!(y, &p);
        }
    }
}

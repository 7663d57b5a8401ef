use ndarray::Array2;
use rand::Rng;

use super::LatentSequence;
use crate::error::Result;
use crate::nn::{gelu, gelu_grad, Linear};
use crate::params::Parameters;

/// Frame-wise `e' = GELU(W e + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTransform {
    pub linear: Linear,
}

impl LatentTransform {
    pub fn identity(dim: usize) -> Self {
        let mut linear = Linear::zeros(dim, dim, true);
        linear.w.diag_mut().fill(1.0);
        LatentTransform { linear }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        LatentTransform {
            linear: Linear::init(dim, dim, true, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.input_dim()
    }

    pub fn zeros_like(&self) -> Self {
        LatentTransform {
            linear: self.linear.zeros_like(),
        }
    }

    /// Output sequence and the pre-activation needed by `backward`.
    pub fn forward(&self, seq: &LatentSequence) -> Result<(LatentSequence, Array2<f64>)> {
        let pre = self.linear.forward(&seq.values)?;
        let out = LatentSequence::new(pre.mapv(gelu), seq.mask.clone())?;
        Ok((out, pre))
    }

    pub fn backward(&self, seq: &LatentSequence, pre: &Array2<f64>, dy: &Array2<f64>) -> Result<(Array2<f64>, LatentTransform)> {
        let mut dpre = dy * &pre.mapv(gelu_grad);
        for (mut row, &valid) in dpre.rows_mut().into_iter().zip(&seq.mask) {
            if !valid {
                row.fill(0.0);
            }
        }
        let (dx, linear) = self.linear.backward(&seq.values, &dpre)?;
        Ok((dx, LatentTransform { linear }))
    }
}

impl Parameters for LatentTransform {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.linear.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.linear.visit_mut(prefix, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, check_input_gradient};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_examples() {
        let t = LatentTransform::identity(3);
        let zero = LatentSequence::dense(Array2::zeros((2, 3))).unwrap();
        assert!(t.forward(&zero).unwrap().0.values.iter().all(|&v| v == 0.0));
        let one = LatentSequence::dense(Array2::from_elem((1, 1), 1.0)).unwrap();
        let y = LatentTransform::identity(1).forward(&one).unwrap().0;
        assert!((y.values[[0, 0]] - 0.8413).abs() < 1e-4);
        let masked = LatentSequence::new(Array2::ones((2, 3)), vec![true, false]).unwrap();
        assert!(t.forward(&masked).unwrap().0.values.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_local() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = LatentTransform::init(4, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-2.0..2.0));
        let y = t.forward(&LatentSequence::dense(x.clone()).unwrap()).unwrap().0;
        let perm = [3, 0, 4, 1, 2];
        let xp = Array2::from_shape_fn((5, 4), |(i, j)| x[[perm[i], j]]);
        let yp = t.forward(&LatentSequence::dense(xp).unwrap()).unwrap().0;
        for i in 0..5 {
            assert_eq!(yp.values.row(i), y.values.row(perm[i]));
        }
    }

    #[test]
    fn gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = LatentTransform::init(3, &mut rng);
        t.linear.b.as_mut().unwrap().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-2.0..2.0));
        let mask = vec![true, true, true, false];
        let seq = LatentSequence::new(x.clone(), mask.clone()).unwrap();
        let probe = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
        let (_, pre) = t.forward(&seq).unwrap();
        let (dx, grads) = t.backward(&seq, &pre, &probe).unwrap();
        check_gradients(&t, &grads, |t| (t.forward(&seq).unwrap().0.values * &probe).sum(), 1e-4).unwrap();
        let loss = |v: &[f64]| {
            let s = LatentSequence::new(Array2::from_shape_vec((4, 3), v.to_vec()).unwrap(), mask.clone()).unwrap();
            (t.forward(&s).unwrap().0.values * &probe).sum()
        };
        check_input_gradient(seq.values.as_slice().unwrap(), dx.as_slice().unwrap(), loss, 1e-4).unwrap();
    }
}

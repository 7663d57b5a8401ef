use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::params::{join, Parameters};

/// `u = W2 relu(W1 z) / |W2 relu(W1 z)|`, no biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub w1: Linear,
    pub w2: Linear,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    pub z: Array2<f64>,
    pub hidden_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub unit: Array2<f64>,
    pub norms: Array1<f64>,
}

const MIN_NORM: f64 = 1e-12;

impl ProjectionHead {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        ProjectionHead {
            w1: Linear::init(input, hidden, false, rng),
            w2: Linear::init(hidden, output, false, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ProjectionHead {
            w1: self.w1.zeros_like(),
            w2: self.w2.zeros_like(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.output_dim()
    }

    /// Projects and normalises each row of `z` (`[batch, input]`).
    pub fn forward(&self, z: &Array2<f64>) -> Result<(Array2<f64>, HeadCache)> {
        let hidden_pre = self.w1.forward(z)?;
        let hidden = hidden_pre.mapv(|v| v.max(0.0));
        let p = self.w2.forward(&hidden)?;
        let norms = p.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        if norms.iter().any(|&n| n < MIN_NORM) {
            return Err(Error::ZeroProjection);
        }
        let unit = &p / &norms.view().insert_axis(Axis(1));
        Ok((
            unit.clone(),
            HeadCache {
                z: z.clone(),
                hidden_pre,
                hidden,
                unit,
                norms,
            },
        ))
    }

    /// Returns `(dz, grads)` for gradients on the unit vectors.
    pub fn backward(&self, cache: &HeadCache, du: &Array2<f64>) -> Result<(Array2<f64>, ProjectionHead)> {
        if du.dim() != cache.unit.dim() {
            return Err(Error::ShapeMismatch("projection gradient shape".into()));
        }
        // d p = (du - u (u . du)) / |p|
        let mut dp = du.clone();
        for ((mut row, u), &n) in dp.rows_mut().into_iter().zip(cache.unit.rows()).zip(&cache.norms) {
            let proj = u.dot(&row);
            row.scaled_add(-proj, &u);
            row.mapv_inplace(|v| v / n);
        }
        let (dh, g2) = self.w2.backward(&cache.hidden, &dp)?;
        let dh_pre = &dh * &cache.hidden_pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let (dz, g1) = self.w1.backward(&cache.z, &dh_pre)?;
        Ok((dz, ProjectionHead { w1: g1, w2: g2 }))
    }
}

impl Parameters for ProjectionHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.w1.visit(&join(prefix, "W1"), f);
        self.w2.visit(&join(prefix, "W2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.w1.visit_mut(&join(prefix, "W1"), f);
        self.w2.visit_mut(&join(prefix, "W2"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, check_input_gradient};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_norm_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ProjectionHead::init(6, 8, 4, &mut rng);
        let z = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
        let (u, _) = head.forward(&z).unwrap();
        for row in u.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
        let (u3, _) = head.forward(&(&z * 3.0)).unwrap();
        for (a, b) in u.iter().zip(u3.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(head.forward(&Array2::zeros((1, 6))), Err(Error::ZeroProjection)));
    }

    #[test]
    fn gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = ProjectionHead::init(4, 6, 3, &mut rng);
        let z = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let probe = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let (_, cache) = head.forward(&z).unwrap();
        let (dz, grads) = head.backward(&cache, &probe).unwrap();
        check_gradients(&head, &grads, |h| (h.forward(&z).unwrap().0 * &probe).sum(), 1e-4).unwrap();
        let loss = |v: &[f64]| (head.forward(&Array2::from_shape_vec((3, 4), v.to_vec()).unwrap()).unwrap().0 * &probe).sum();
        check_input_gradient(z.as_slice().unwrap(), dz.as_slice().unwrap(), loss, 1e-4).unwrap();
    }
}

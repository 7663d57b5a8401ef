use ndarray::Array4;

use super::QTensor;
use crate::error::{Error, Result};

/// Radial quaternion activation `q -> max(|q| - theta, 0) / (|q| + eps) * q`.
///
/// With `theta = 0` this only shrinks magnitudes and never changes direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QRelu {
    pub eps: f64,
    pub theta: f64,
}

impl QRelu {
    pub fn new(eps: f64) -> Result<Self> {
        Self::with_threshold(eps, 0.0)
    }

    pub fn with_threshold(eps: f64, theta: f64) -> Result<Self> {
        if !(eps > 0.0) || !(theta >= 0.0) {
            return Err(Error::InvalidConfig(format!("qReLU needs eps > 0 and theta >= 0, got {eps}, {theta}")));
        }
        Ok(QRelu { eps, theta })
    }

    /// Multiplier applied to a quaternion of norm `n`.
    pub fn scale(&self, n: f64) -> f64 {
        (n - self.theta).max(0.0) / (n + self.eps)
    }

    pub fn forward(&self, x: &QTensor) -> QTensor {
        let mut y = x.data.clone();
        let (c, _, t, f) = y.dim();
        let plane = t * f;
        let ys = y.as_slice_mut().expect("standard layout");
        for ci in 0..c {
            let block = &mut ys[ci * 4 * plane..(ci + 1) * 4 * plane];
            for i in 0..plane {
                let n = (0..4).map(|k| block[k * plane + i].powi(2)).sum::<f64>().sqrt();
                let s = self.scale(n);
                for k in 0..4 {
                    block[k * plane + i] *= s;
                }
            }
        }
        QTensor { data: y, mask: x.mask.clone() }
    }

    /// Full 4x4 Jacobian transpose applied to `dy`; zero at the origin.
    pub fn backward(&self, x: &QTensor, dy: &Array4<f64>) -> Result<Array4<f64>> {
        if dy.dim() != x.data.dim() {
            return Err(Error::ShapeMismatch("qReLU gradient shape".into()));
        }
        let mut dx = Array4::zeros(dy.raw_dim());
        let (c, _, t, f) = dy.dim();
        let plane = t * f;
        let xs = x.data.as_slice().expect("standard layout");
        let gs = dy.as_slice().expect("standard layout");
        let ds = dx.as_slice_mut().expect("fresh array");
        for ci in 0..c {
            let base = ci * 4 * plane;
            for i in 0..plane {
                let at = |k: usize| base + k * plane + i;
                let n = (0..4).map(|k| xs[at(k)].powi(2)).sum::<f64>().sqrt();
                if n <= self.theta || n == 0.0 {
                    continue;
                }
                let s = self.scale(n);
                let ds_dn = (self.eps + self.theta) / ((n + self.eps) * (n + self.eps));
                let qdy: f64 = (0..4).map(|k| xs[at(k)] * gs[at(k)]).sum();
                let coef = ds_dn * qdy / n;
                for k in 0..4 {
                    ds[at(k)] = s * gs[at(k)] + coef * xs[at(k)];
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_input_gradient;
    use crate::quaternion::Quaternion;
    use proptest::prelude::*;

    fn single(q: [f64; 4]) -> QTensor {
        let mut x = QTensor::zeros(1, 1, 1, vec![true]);
        x.set(0, 0, 0, Quaternion::from_array(q));
        x
    }

    #[test]
    fn examples() {
        let r = QRelu::new(1.0).unwrap();
        assert_eq!(r.forward(&single([0.0; 4])).get(0, 0, 0), Quaternion::ZERO);
        let y = r.forward(&single([3.0, 0.0, 4.0, 0.0])).get(0, 0, 0);
        assert!((y.r - 2.5).abs() < 1e-15 && y.a == 0.0 && (y.b - 10.0 / 3.0).abs() < 1e-15 && y.c == 0.0);

        let r = QRelu::new(1e-3).unwrap();
        let q = [600.0, 0.0, 800.0, 0.0];
        let y = r.forward(&single(q)).get(0, 0, 0).to_array();
        for k in 0..4 {
            assert!((y[k] - q[k]).abs() <= 1e-5 * 1e3);
        }
        assert!(QRelu::new(0.0).is_err());
    }

    #[test]
    fn zero_gradient_at_origin() {
        let r = QRelu::new(1e-4).unwrap();
        let dx = r.backward(&single([0.0; 4]), &Array4::ones((1, 4, 1, 1))).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (eps, theta) in [(1e-4, 0.0), (0.5, 0.0), (0.1, 0.3)] {
            let r = QRelu::with_threshold(eps, theta).unwrap();
            let x0: Vec<f64> = (0..24).map(|i| ((i * 37 % 17) as f64 - 8.0) / 7.0).collect();
            let probe: Vec<f64> = (0..24).map(|i| ((i * 11 % 13) as f64 - 6.0) / 5.0).collect();
            let as_tensor = |v: &[f64]| QTensor::new(Array4::from_shape_vec((2, 4, 1, 3), v.to_vec()).unwrap(), vec![true]).unwrap();
            let loss = |v: &[f64]| r.forward(&as_tensor(v)).data.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>();
            let dy = Array4::from_shape_vec((2, 4, 1, 3), probe.clone()).unwrap();
            let dx = r.backward(&as_tensor(&x0), &dy).unwrap();
            check_input_gradient(&x0, dx.as_slice().unwrap(), loss, 1e-4).unwrap();
        }
    }

    proptest! {
        #[test]
        fn direction_is_preserved(q in prop::array::uniform4(-10.0f64..10.0), eps in 1e-6f64..1.0) {
            let r = QRelu::new(eps).unwrap();
            let y = r.forward(&single(q)).get(0, 0, 0);
            let qn = Quaternion::from_array(q);
            let s = r.scale(qn.norm());
            prop_assert!((0.0..1.0).contains(&s));
            prop_assert_eq!(y, qn.scale(s));
        }
    }
}

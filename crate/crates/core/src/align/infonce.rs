use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, softmax};

/// Losses of both retrieval directions and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoNce {
    pub l_qs: f64,
    pub l_sq: f64,
    pub l_cpa: f64,
    /// Similarities divided by the temperature, `[B, B]`.
    pub logits: Array2<f64>,
}

/// Symmetric InfoNCE over the in-batch pairs `(u_b, v_b)`.
pub fn infonce_bidirectional(u: &Array2<f64>, v: &Array2<f64>, temperature: f64) -> Result<InfoNce> {
    if !(temperature > 0.0) {
        return Err(Error::TemperatureNonPositive(temperature));
    }
    if u.dim() != v.dim() || u.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!("InfoNCE on {:?} and {:?}", u.dim(), v.dim())));
    }
    let b = u.nrows();
    let logits = u.dot(&v.t()) / temperature;
    let mut l_qs = 0.0;
    let mut l_sq = 0.0;
    for i in 0..b {
        let row = logits.row(i).to_vec();
        let col = logits.column(i).to_vec();
        l_qs += log_sum_exp(&row) - logits[[i, i]];
        l_sq += log_sum_exp(&col) - logits[[i, i]];
    }
    let (l_qs, l_sq) = (l_qs / b as f64, l_sq / b as f64);
    Ok(InfoNce {
        l_qs,
        l_sq,
        l_cpa: 0.5 * (l_qs + l_sq),
        logits,
    })
}

/// Gradients of `l_cpa` with respect to `u` and `v`.
pub fn infonce_backward(u: &Array2<f64>, v: &Array2<f64>, temperature: f64, out: &InfoNce) -> (Array2<f64>, Array2<f64>) {
    let b = u.nrows();
    let mut ds = Array2::zeros((b, b));
    for i in 0..b {
        let p_row = softmax(&out.logits.row(i).to_vec());
        let p_col = softmax(&out.logits.column(i).to_vec());
        for j in 0..b {
            ds[[i, j]] += p_row[j];
            ds[[j, i]] += p_col[j];
        }
        ds[[i, i]] -= 2.0;
    }
    // 0.5 from the mean, 1/B from each direction's average, 1/eta from the logits
    ds *= 0.5 / (b as f64 * temperature);
    (ds.dot(v), ds.t().dot(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_input_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_units(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Array2<f64> {
        let mut m: Array2<f64> = Array2::from_shape_fn((b, d), |_| rng.random_range(-1.0..1.0));
        for mut row in m.rows_mut() {
            let n = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / n);
        }
        m
    }

    #[test]
    fn closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_units(&mut rng, 1, 5);
        let v = random_units(&mut rng, 1, 5);
        let out = infonce_bidirectional(&u, &v, 0.25).unwrap();
        assert_eq!((out.l_qs, out.l_sq, out.l_cpa), (0.0, 0.0, 0.0));

        let e = Array2::from_shape_vec((2, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let out = infonce_bidirectional(&e, &e, 0.25).unwrap();
        let expected = -(4f64.exp() / (4f64.exp() + 1.0)).ln();
        assert!((out.l_qs - expected).abs() < 1e-12);
        assert!((out.l_cpa - 0.01815).abs() < 1e-5);
        assert!(matches!(infonce_bidirectional(&e, &e, 0.0), Err(Error::TemperatureNonPositive(_))));
    }

    #[test]
    fn gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, d, eta) = (4, 3, 0.25);
        let u = random_units(&mut rng, b, d);
        let v = random_units(&mut rng, b, d);
        let out = infonce_bidirectional(&u, &v, eta).unwrap();
        let (du, dv) = infonce_backward(&u, &v, eta, &out);
        let lu = |x: &[f64]| infonce_bidirectional(&Array2::from_shape_vec((b, d), x.to_vec()).unwrap(), &v, eta).unwrap().l_cpa;
        check_input_gradient(u.as_slice().unwrap(), du.as_slice().unwrap(), lu, 1e-4).unwrap();
        let lv = |x: &[f64]| infonce_bidirectional(&u, &Array2::from_shape_vec((b, d), x.to_vec()).unwrap(), eta).unwrap().l_cpa;
        check_input_gradient(v.as_slice().unwrap(), dv.as_slice().unwrap(), lv, 1e-4).unwrap();
    }

    #[test]
    fn symmetry_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b = rng.random_range(2..8);
            let u = random_units(&mut rng, b, 6);
            let v = random_units(&mut rng, b, 6);
            let uv = infonce_bidirectional(&u, &v, 0.3).unwrap();
            let vu = infonce_bidirectional(&v, &u, 0.3).unwrap();
            assert!((uv.l_cpa - vu.l_cpa).abs() < 1e-12);
            assert!((uv.l_qs - vu.l_sq).abs() < 1e-12);
            let mut perm: Vec<usize> = (0..b).collect();
            perm.rotate_left(1);
            let up = Array2::from_shape_fn((b, 6), |(i, j)| u[[perm[i], j]]);
            let vp = Array2::from_shape_fn((b, 6), |(i, j)| v[[perm[i], j]]);
            let p = infonce_bidirectional(&up, &vp, 0.3).unwrap();
            assert!((p.l_qs - uv.l_qs).abs() < 1e-12 && (p.l_sq - uv.l_sq).abs() < 1e-12);
        }
    }
}

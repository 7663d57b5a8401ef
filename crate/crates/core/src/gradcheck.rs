//! Central finite-difference checks against analytic gradients.

use crate::params::Parameters;

/// Perturbation used for every check.
pub const STEP: f64 = 1e-5;

/// Absolute slack for entries whose true gradient is (numerically) zero.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}[{}]: analytic {:.9e}, numeric {:.9e}",
            self.name, self.index, self.analytic, self.numeric
        )
    }
}

/// `|a - n| <= tol * max(|a|, |n|) + 1e-8`.
pub fn close(analytic: f64, numeric: f64, tol: f64) -> bool {
    (analytic - numeric).abs() <= tol * analytic.abs().max(numeric.abs()) + ABS_FLOOR
}

/// Central difference of `loss` in every trainable scalar of `params`.
pub fn check_gradients<P, F>(params: &P, grads: &P, loss: F, tol: f64) -> Result<usize, Mismatch>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    check_gradients_sampled(params, grads, loss, tol, usize::MAX)
}

/// Like [`check_gradients`] but probes at most `per_array` evenly spaced
/// entries of each array. Returns the number of entries probed.
pub fn check_gradients_sampled<P, F>(params: &P, grads: &P, loss: F, tol: f64, per_array: usize) -> Result<usize, Mismatch>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    grads.visit("", &mut |name, _, v| analytic.push((name.to_string(), v.to_vec())));
    let mut checked = 0;
    for (array, (name, g)) in analytic.iter().enumerate() {
        let stride = g.len().div_ceil(per_array.max(1)).max(1);
        for index in (0..g.len()).step_by(stride) {
            let eval = |delta: f64| {
                let mut p = params.clone();
                let mut seen = 0;
                p.visit_mut("", &mut |_, v| {
                    if seen == array {
                        v[index] += delta;
                    }
                    seen += 1;
                });
                loss(&p)
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            if !close(g[index], numeric, tol) {
                return Err(Mismatch {
                    name: name.clone(),
                    index,
                    analytic: g[index],
                    numeric,
                });
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Central difference of a scalar function of a flat input vector.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(x: &[f64], f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + STEP;
            let up = f(&probe);
            probe[i] = orig - STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

/// Compares an analytic input gradient against [`numeric_gradient`].
pub fn check_input_gradient<F: Fn(&[f64]) -> f64>(x: &[f64], analytic: &[f64], f: F, tol: f64) -> Result<(), Mismatch> {
    let numeric = numeric_gradient(x, f);
    for (index, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        if !close(a, n, tol) {
            return Err(Mismatch {
                name: "input".into(),
                index,
                analytic: a,
                numeric: n,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let x = [1.0, -2.0, 0.5];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        check_input_gradient(&x, &g, |v| v.iter().map(|a| a * a).sum(), 1e-6).unwrap();
        let wrong = [2.0, -4.0, 2.0];
        assert!(check_input_gradient(&x, &wrong, |v| v.iter().map(|a| a * a).sum(), 1e-6).is_err());
    }
}

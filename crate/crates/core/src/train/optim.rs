use crate::error::{Error, Result};
use crate::params::Parameters;

/// Adam with decoupled weight decay.
///
/// Moments are allocated on the first step and matched to parameters by
/// traversal order.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamW {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every array for which `trainable(name)` holds:
    /// `θ ← θ − lr·wd·θ`, then `θ ← θ − lr·m̂/(√v̂ + ε)`.
    pub fn step<P: Parameters + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &P,
        lr: f64,
        weight_decay: f64,
        trainable: &dyn Fn(&str) -> bool,
    ) -> Result<()> {
        let mut g: Vec<&[f64]> = Vec::new();
        grads.visit("", &mut |_, _, v| g.push(v));
        if self.m.is_empty() {
            self.m = g.iter().map(|s| vec![0.0; s.len()]).collect();
            self.v = self.m.clone();
        }
        if g.len() != self.m.len() || g.iter().zip(&self.m).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::ShapeMismatch("gradients do not match the optimizer state".into()));
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let mut idx = 0;
        let mut err = None;
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.visit_mut("", &mut |name, theta| {
            let i = idx;
            idx += 1;
            if i >= g.len() || theta.len() != g[i].len() {
                err.get_or_insert_with(|| Error::ShapeMismatch(format!("parameter `{name}` has no matching gradient")));
                return;
            }
            if !trainable(name) {
                return;
            }
            let (m, v) = (&mut ms[i], &mut vs[i]);
            for (j, t) in theta.iter_mut().enumerate() {
                let gj = g[i][j];
                *t -= lr * weight_decay * *t;
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *t -= lr * mh / (vh.sqrt() + eps);
            }
        });
        if idx != g.len() {
            err.get_or_insert_with(|| Error::ShapeMismatch("parameter count differs from gradients".into()));
        }
        err.map_or(Ok(()), Err)
    }
}

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{argmax, log_sum_exp, softmax, Linear};
use crate::params::{join, Parameters};

/// `logits = W2 relu(W1 z + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub l1: Linear,
    pub l2: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub label: usize,
}

impl Prediction {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        let label = argmax(&probabilities);
        Prediction {
            logits,
            probabilities,
            label,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierCache {
    z: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl ClassifierHead {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        ClassifierHead {
            l1: Linear::zeros(input, hidden, true),
            l2: Linear::zeros(hidden, classes, true),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        ClassifierHead {
            l1: Linear::init(input, hidden, true, rng),
            l2: Linear::init(hidden, classes, true, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.l2.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        ClassifierHead {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
        }
    }

    /// Logits for each row of `z`.
    pub fn forward(&self, z: &Array2<f64>) -> Result<(Array2<f64>, ClassifierCache)> {
        let pre = self.l1.forward(z)?;
        let hidden = pre.mapv(|v| v.max(0.0));
        let logits = self.l2.forward(&hidden)?;
        Ok((logits, ClassifierCache { z: z.clone(), pre, hidden }))
    }

    pub fn backward(&self, cache: &ClassifierCache, dlogits: &Array2<f64>) -> Result<(Array2<f64>, ClassifierHead)> {
        let (dh, g2) = self.l2.backward(&cache.hidden, dlogits)?;
        let dpre = dh * cache.pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let (dz, g1) = self.l1.backward(&cache.z, &dpre)?;
        Ok((dz, ClassifierHead { l1: g1, l2: g2 }))
    }
}

pub fn classify(head: &ClassifierHead, z: &Array1<f64>) -> Result<Prediction> {
    let (logits, _) = head.forward(&z.view().insert_axis(ndarray::Axis(0)).to_owned())?;
    Ok(Prediction::from_logits(logits.row(0).to_vec()))
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[label])
}

/// `softmax(logits) - onehot(label)`.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<Vec<f64>> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let mut g = softmax(logits);
    g[label] -= 1.0;
    Ok(g)
}

impl Parameters for ClassifierHead {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        self.l1.visit(&join(prefix, "l1"), f);
        self.l2.visit(&join(prefix, "l2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.l1.visit_mut(&join(prefix, "l1"), f);
        self.l2.visit_mut(&join(prefix, "l2"), f);
    }
}

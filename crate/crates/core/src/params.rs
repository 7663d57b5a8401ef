//! Named parameter traversal.
//!
//! Every trainable layer walks its arrays in a fixed order under stable,
//! dotted names (`qse.block0.W_M`, `fusion.layer0.attn.W_q`, ...). Gradient
//! buffers are values of the same type as the layer they belong to, so the
//! optimizer and the checkpoint code only ever need this one trait.

use ndarray::{Array, Dimension};

use crate::container::ArrayStore;
use crate::error::{Error, Result};

pub trait Parameters {
    /// Visits trainable arrays as `(name, shape, values)`.
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [f64]));

    /// Visits trainable arrays mutably, in the same order as [`Parameters::visit`].
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    /// Non-trainable state that still belongs in a checkpoint (running statistics).
    fn visit_buffers<'a>(&'a self, _prefix: &str, _f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {}

    fn visit_buffers_mut(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut [f64])) {}
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn visit_array<'a, D: Dimension>(
    prefix: &str,
    name: &str,
    arr: &'a Array<f64, D>,
    f: &mut dyn FnMut(&str, &[usize], &'a [f64]),
) {
    let values = arr.as_slice().expect("parameters are kept in standard layout");
    f(&join(prefix, name), arr.shape(), values);
}

pub(crate) fn visit_array_mut<D: Dimension>(
    prefix: &str,
    name: &str,
    arr: &mut Array<f64, D>,
    f: &mut dyn FnMut(&str, &mut [f64]),
) {
    let values = arr.as_slice_mut().expect("parameters are kept in standard layout");
    f(&join(prefix, name), values);
}

pub fn param_count<P: Parameters + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, _, v| n += v.len());
    n
}

pub fn zero_all<P: Parameters + ?Sized>(p: &mut P) {
    p.visit_mut("", &mut |_, v| v.fill(0.0));
}

/// `acc += other`, matched by traversal order. Both must share a structure.
pub fn accumulate<P: Parameters + ?Sized>(acc: &mut P, other: &P) {
    let mut src: Vec<&[f64]> = Vec::new();
    other.visit("", &mut |_, _, v| src.push(v));
    let mut it = src.into_iter();
    acc.visit_mut("", &mut |name, v| {
        let s = it.next().unwrap_or_else(|| panic!("gradient structure mismatch at {name}"));
        assert_eq!(s.len(), v.len(), "gradient length mismatch at {name}");
        v.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    });
}

pub fn scale_all<P: Parameters + ?Sized>(p: &mut P, k: f64) {
    p.visit_mut("", &mut |_, v| v.iter_mut().for_each(|x| *x *= k));
}

/// Writes trainable arrays and buffers into `store` under `prefix`.
pub fn export<P: Parameters + ?Sized>(p: &P, prefix: &str, store: &mut ArrayStore) -> Result<()> {
    let mut out = Ok(());
    let mut put = |name: &str, shape: &[usize], v: &[f64]| {
        if out.is_ok() {
            out = store.insert_f64(name, shape, v.to_vec());
        }
    };
    p.visit(prefix, &mut put);
    p.visit_buffers(prefix, &mut put);
    out
}

/// Reads every trainable array and buffer of `p` back from `store`.
pub fn import<P: Parameters + ?Sized>(p: &mut P, prefix: &str, store: &ArrayStore) -> Result<()> {
    let mut out = Ok(());
    let mut fill = |name: &str, v: &mut [f64]| {
        if out.is_err() {
            return;
        }
        out = match store.get(name) {
            None => Err(Error::Format(format!("checkpoint is missing `{name}`"))),
            Some(arr) => {
                let src = arr.to_f64_vec();
                if src.len() != v.len() {
                    Err(Error::ShapeMismatch(format!(
                        "`{name}` holds {} values, model expects {}",
                        src.len(),
                        v.len()
                    )))
                } else {
                    v.copy_from_slice(&src);
                    Ok(())
                }
            }
        };
    };
    p.visit_mut(prefix, &mut fill);
    p.visit_buffers_mut(prefix, &mut fill);
    out
}

use ndarray::{s, Array4};

use crate::dsp::{Channel, QuartetField};
use crate::error::{Error, Result};
use crate::quaternion::Quaternion;

/// Quaternion feature map `[channels, 4, frames, bins]` with a frame mask.
///
/// Axis 1 holds the (r, i, j, k) component planes. Masked frames are
/// exactly zero in every component.
#[derive(Clone, Debug, PartialEq)]
pub struct QTensor {
    pub data: Array4<f64>,
    pub mask: Vec<bool>,
}

impl QTensor {
    /// Wraps `data`, zeroing any masked frame.
    pub fn new(mut data: Array4<f64>, mask: Vec<bool>) -> Result<Self> {
        let (_, comps, frames, _) = data.dim();
        if comps != 4 {
            return Err(Error::ShapeMismatch(format!("component axis has length {comps}, expected 4")));
        }
        if mask.len() != frames {
            return Err(Error::ShapeMismatch(format!("mask length {} != {frames} frames", mask.len())));
        }
        if !data.is_standard_layout() {
            data = data.as_standard_layout().into_owned();
        }
        for (t, &valid) in mask.iter().enumerate() {
            if !valid {
                data.slice_mut(s![.., .., t, ..]).fill(0.0);
            }
        }
        Ok(QTensor { data, mask })
    }

    pub fn zeros(channels: usize, frames: usize, bins: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), frames);
        QTensor {
            data: Array4::zeros((channels, 4, frames, bins)),
            mask,
        }
    }

    /// Builds the single-channel input field: (r, i, j, k) = (M, rho, f_inst, tau_g).
    pub fn from_quartet(q: &QuartetField) -> Self {
        let (frames, bins) = q.m.dim();
        let mut data = Array4::zeros((1, 4, frames, bins));
        for ch in Channel::ALL {
            data.slice_mut(s![0, ch.index(), .., ..]).assign(q.plane(ch));
        }
        QTensor::new(data, q.mask.clone()).expect("quartet planes share one shape")
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn bins(&self) -> usize {
        self.data.dim().3
    }

    pub fn valid_frames(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    pub fn get(&self, c: usize, t: usize, f: usize) -> Quaternion {
        Quaternion::new(
            self.data[[c, 0, t, f]],
            self.data[[c, 1, t, f]],
            self.data[[c, 2, t, f]],
            self.data[[c, 3, t, f]],
        )
    }

    pub fn set(&mut self, c: usize, t: usize, f: usize, q: Quaternion) {
        for (k, v) in q.to_array().into_iter().enumerate() {
            self.data[[c, k, t, f]] = v;
        }
    }

    pub(crate) fn zero_masked(&mut self) {
        zero_masked_frames(&mut self.data, &self.mask);
    }
}

pub(crate) fn zero_masked_frames(data: &mut Array4<f64>, mask: &[bool]) {
    for (t, &valid) in mask.iter().enumerate() {
        if !valid {
            data.slice_mut(s![.., .., t, ..]).fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_enforces_layout() {
        assert!(QTensor::new(Array4::zeros((1, 3, 2, 2)), vec![true, true]).is_err());
        assert!(QTensor::new(Array4::zeros((1, 4, 2, 2)), vec![true]).is_err());
        let x = QTensor::new(Array4::ones((2, 4, 3, 2)), vec![true, true, false]).unwrap();
        assert!(x.data.slice(s![.., .., 2, ..]).iter().all(|&v| v == 0.0));
        assert_eq!(x.valid_frames(), 2);
        assert_eq!(x.get(1, 0, 1), Quaternion::new(1.0, 1.0, 1.0, 1.0));
    }
}

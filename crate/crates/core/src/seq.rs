use ndarray::Array2;

use crate::error::{Error, Result};

/// A `[frames, dim]` sequence with a frame mask. Masked rows are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeq {
    pub values: Array2<f64>,
    pub mask: Vec<bool>,
}

impl FrameSeq {
    pub fn new(mut values: Array2<f64>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != values.nrows() {
            return Err(Error::Format(format!(
                "mask length {} != {} frames",
                mask.len(),
                values.nrows()
            )));
        }
        for (t, &valid) in mask.iter().enumerate() {
            if valid {
                if values.row(t).iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteData(format!("frame {t}")));
                }
            } else {
                values.row_mut(t).fill(0.0);
            }
        }
        Ok(FrameSeq { values, mask })
    }

    /// Every frame valid.
    pub fn dense(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        Self::new(values, vec![true; n])
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn valid_frames(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }

    /// Mean over valid frames.
    pub fn valid_mean(&self) -> Option<Vec<f64>> {
        let n = self.valid_frames();
        if n == 0 {
            return None;
        }
        let mut acc = vec![0.0; self.dim()];
        for (row, _) in self.values.rows().into_iter().zip(&self.mask).filter(|(_, &m)| m) {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        Some(acc.into_iter().map(|a| a / n as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_rows_are_zeroed() {
        let s = FrameSeq::new(Array2::ones((3, 2)), vec![true, true, false]).unwrap();
        assert_eq!(s.values.row(2).to_vec(), vec![0.0, 0.0]);
        assert_eq!(s.valid_mean().unwrap(), vec![1.0, 1.0]);
        assert!(FrameSeq::new(Array2::ones((3, 2)), vec![true]).is_err());
        let mut bad = Array2::ones((2, 2));
        bad[[0, 1]] = f64::NAN;
        assert!(matches!(FrameSeq::dense(bad), Err(Error::NonFiniteData(_))));
    }
}

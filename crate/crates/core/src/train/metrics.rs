use ndarray::Array2;

use crate::error::{Error, Result};

/// Confusion matrix (rows truth, columns prediction) and the summary rates
/// derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub confusion: Array2<u64>,
    pub wa: f64,
    pub ua: f64,
    pub macro_f1: f64,
}

impl EvalMetrics {
    /// Classes with no true and no predicted items contribute 0 to both
    /// macro averages; any other zero denominator also yields 0.
    pub fn from_confusion(confusion: Array2<u64>) -> Result<Self> {
        let c = confusion.nrows();
        if c == 0 || confusion.ncols() != c {
            return Err(Error::ShapeMismatch("confusion matrix must be square and non-empty".into()));
        }
        let total: u64 = confusion.sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let diag: u64 = (0..c).map(|k| confusion[[k, k]]).sum();
        let mut recall_sum = 0.0;
        let mut f1_sum = 0.0;
        for k in 0..c {
            let tp = confusion[[k, k]] as f64;
            let truth = confusion.row(k).sum() as f64;
            let predicted = confusion.column(k).sum() as f64;
            if truth > 0.0 {
                recall_sum += tp / truth;
            }
            let denom = truth + predicted;
            if denom > 0.0 {
                f1_sum += 2.0 * tp / denom;
            }
        }
        Ok(EvalMetrics {
            wa: diag as f64 / total as f64,
            ua: recall_sum / c as f64,
            macro_f1: f1_sum / c as f64,
            confusion,
        })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch("truth and prediction lists differ in length".into()));
        }
        let mut m = Array2::zeros((classes, classes));
        for (&t, &p) in truth.iter().zip(predicted) {
            for label in [t, p] {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
            }
            m[[t, p]] += 1;
        }
        Self::from_confusion(m)
    }

    pub fn count(&self) -> u64 {
        self.confusion.sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn two_class_example() {
        let m = EvalMetrics::from_confusion(array![[3, 1], [2, 4]]).unwrap();
        // Per-class counts by hand: recall 3/4 and 4/6, F1 6/9 and 8/11.
        assert!((m.wa - 0.7).abs() < 1e-15);
        assert!((m.ua - (0.75 + 4.0 / 6.0) / 2.0).abs() < 1e-15);
        assert!((m.macro_f1 - (2.0 / 3.0 + 8.0 / 11.0) / 2.0).abs() < 1e-15);
        assert_eq!(format!("{:.4} {:.4} {:.4}", m.wa, m.ua, m.macro_f1), "0.7000 0.7083 0.6970");
    }

    #[test]
    fn perfect_and_absent_classes() {
        let m = EvalMetrics::from_predictions(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!((m.wa, m.ua, m.macro_f1), (1.0, 1.0, 1.0));
        let m = EvalMetrics::from_predictions(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m.wa, 1.0);
        assert!((m.ua - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            EvalMetrics::from_confusion(Array2::zeros((2, 2))),
            Err(Error::EmptyDataset)
        ));
        assert!(EvalMetrics::from_predictions(&[0], &[3], 2).is_err());
    }

    proptest! {
        #[test]
        fn bounds_and_independent_accuracy(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let m = EvalMetrics::from_predictions(&truth, &pred, 5).unwrap();
            let acc = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64;
            prop_assert_eq!(m.wa, acc);
            prop_assert_eq!(m.count(), truth.len() as u64);
            for v in [m.wa, m.ua, m.macro_f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

//! Contract shared by every base classifier the hierarchy can be built from.

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// A fitted multi-class model over classes `0..n_classes()`.
///
/// Every row returned by `predict_proba` lies on the probability simplex:
/// non-negative entries summing to one within 1e-9, in class-index order.
pub trait Classifier: Send + Sync {
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix>;
}

/// Builds classifiers from labeled rows.
pub trait Trainer: Send + Sync {
    type Model: Classifier;

    /// Fits a model on `x` with labels in `0..n_classes`. `seed` lets callers
    /// give independent models independent randomness.
    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Self::Model>;
}

pub(crate) fn check_training_input(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if n_classes == 0 {
        return Err(Error::InvalidConfig("zero classes".into()));
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: n_classes,
        });
    }
    x.check_finite()
}

pub(crate) fn check_width(x: &Matrix, n_features: usize) -> Result<()> {
    if x.cols() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: x.cols(),
        });
    }
    Ok(())
}

/// Numerically stable softmax of raw scores, in place.
pub(crate) fn softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = math::exp(*s - max);
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_on_simplex() {
        let mut s = [1000.0, -1000.0, 0.0, 3.5];
        softmax(&mut s);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.iter().all(|p| *p >= 0.0));
        let mut z = [0.0; 4];
        softmax(&mut z);
        assert_eq!(z, [0.25; 4]);
    }
}

//! Z-score standardization fitted on training rows only.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;

/// Standard deviations below this are treated as zero variance.
pub const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub means: Vec<f64>,
    /// Always strictly positive; zero-variance columns get 1.0.
    pub scales: Vec<f64>,
}

impl Scaler {
    /// Column means and population standard deviations of `x`.
    pub fn fit(x: &Matrix) -> Result<Scaler> {
        if x.rows() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: x.rows(),
            });
        }
        x.check_finite()?;
        let n = x.rows() as f64;
        let mut means = alloc::vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (m, v) in means.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut var = alloc::vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = var
            .into_iter()
            .map(|s| {
                let sd = math::sqrt(s / n);
                if sd < MIN_SCALE {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Scaler { means, scales })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &mut [f64]) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: row.len(),
            });
        }
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.scales) {
            *v = (*v - m) / s;
        }
        Ok(())
    }

    /// Applies the stored training statistics; never re-estimates them.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.transform_row(out.row_mut(i))?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_rows(1, v.iter().map(|x| [*x])).unwrap()
    }

    #[test]
    fn one_two_three() {
        let s = Scaler::fit(&col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(s.means, [2.0]);
        assert!((s.scales[0] - 0.816_496_580_927_726).abs() < 1e-12);
    }

    #[test]
    fn constant_column_passes_through() {
        let s = Scaler::fit(&col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!((s.means[0], s.scales[0]), (5.0, 1.0));
        let t = s.transform(&col(&[5.0, 6.0])).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn already_standardized_is_fixed_point() {
        let x = col(&[-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589]);
        let s = Scaler::fit(&x).unwrap();
        assert!(s.means[0].abs() < 1e-9);
        assert!((s.scales[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uses_training_statistics() {
        let s = Scaler::fit(&col(&[0.0, 2.0])).unwrap();
        let test = col(&[100.0, 101.0, 1.0]);
        let t = s.transform(&test).unwrap();
        assert_eq!(t.as_slice(), &[99.0, 100.0, 0.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(Scaler::fit(&col(&[1.0])), Err(Error::TooFewRows { .. })));
        let s = Scaler::fit(&col(&[1.0, 2.0])).unwrap();
        let wide = Matrix::zeros(2, 3);
        assert!(matches!(s.transform(&wide), Err(Error::DimensionMismatch { .. })));
    }
}

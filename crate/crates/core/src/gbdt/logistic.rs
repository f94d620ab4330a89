//! Multinomial logistic regression, used as a reference classifier.
//!
//! Fitted by full-batch gradient descent with Armijo backtracking on
//! internally standardized inputs and an L2 penalty on the weights.

use alloc::vec::Vec;

use crate::classifier::{self, Classifier, Trainer};
use crate::error::Result;
use crate::math;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticTrainer {
    pub l2: f64,
    pub max_iter: usize,
    /// Stops once the gradient's max-norm falls below this.
    pub tol: f64,
}

impl Default for LogisticTrainer {
    fn default() -> Self {
        LogisticTrainer {
            l2: 1e-4,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    n_features: usize,
    n_classes: usize,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// `n_classes x (n_features + 1)`, bias last.
    weights: Vec<f64>,
}

impl LogisticModel {
    fn scores(&self, z: &[f64], out: &mut [f64]) {
        let w = self.n_features + 1;
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * w..(c + 1) * w];
            *o = row[self.n_features] + row[..self.n_features].iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

impl Classifier for LogisticModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        classifier::check_width(x, self.n_features)?;
        x.check_finite()?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        let mut z = alloc::vec![0.0; self.n_features];
        for i in 0..x.rows() {
            for (j, v) in x.row(i).iter().enumerate() {
                z[j] = (v - self.means[j]) / self.scales[j];
            }
            let row = out.row_mut(i);
            self.scores(&z, row);
            classifier::softmax(row);
        }
        Ok(out)
    }
}

fn standardize(x: &Matrix) -> (Vec<f64>, Vec<f64>, Matrix) {
    let (n, d) = (x.rows(), x.cols());
    let mut means = alloc::vec![0.0; d];
    let mut scales = alloc::vec![1.0; d];
    for j in 0..d {
        let m = x.column(j).sum::<f64>() / n as f64;
        let var = x.column(j).map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        means[j] = m;
        let s = math::sqrt(var);
        scales[j] = if s > 1e-12 { s } else { 1.0 };
    }
    let mut z = x.clone();
    for i in 0..n {
        for (j, v) in z.row_mut(i).iter_mut().enumerate() {
            *v = (*v - means[j]) / scales[j];
        }
    }
    (means, scales, z)
}

impl LogisticTrainer {
    /// Penalized mean negative log-likelihood and, if requested, its gradient.
    fn objective(&self, model: &LogisticModel, z: &Matrix, y: &[usize], grad: Option<&mut [f64]>) -> f64 {
        let (k, d) = (model.n_classes, model.n_features);
        let w = d + 1;
        let n = z.rows() as f64;
        let mut p = alloc::vec![0.0; k];
        let mut loss = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (i, &label) in y.iter().enumerate() {
            let row = z.row(i);
            model.scores(row, &mut p);
            classifier::softmax(&mut p);
            loss -= math::ln(p[label].max(1e-300));
            if let Some(g) = g.as_deref_mut() {
                for c in 0..k {
                    let r = (p[c] - if c == label { 1.0 } else { 0.0 }) / n;
                    let gc = &mut g[c * w..(c + 1) * w];
                    for (gj, xj) in gc[..d].iter_mut().zip(row) {
                        *gj += r * xj;
                    }
                    gc[d] += r;
                }
            }
        }
        let mut penalty = 0.0;
        for c in 0..k {
            for j in 0..d {
                let wj = model.weights[c * w + j];
                penalty += wj * wj;
                if let Some(g) = g.as_deref_mut() {
                    g[c * w + j] += self.l2 * wj;
                }
            }
        }
        loss / n + 0.5 * self.l2 * penalty
    }
}

impl Trainer for LogisticTrainer {
    type Model = LogisticModel;

    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, _seed: u64) -> Result<LogisticModel> {
        classifier::check_training_input(x, y, n_classes)?;
        let (means, scales, z) = standardize(x);
        let d = x.cols();
        let mut model = LogisticModel {
            n_features: d,
            n_classes,
            means,
            scales,
            weights: alloc::vec![0.0; n_classes * (d + 1)],
        };
        if n_classes == 1 || z.rows() == 0 {
            return Ok(model);
        }
        let mut grad = alloc::vec![0.0; model.weights.len()];
        let mut loss = self.objective(&model, &z, y, Some(&mut grad));
        let mut step = 1.0;
        for _ in 0..self.max_iter {
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if grad.iter().fold(0.0f64, |m, g| m.max(math::abs(*g))) < self.tol {
                break;
            }
            let base = model.weights.clone();
            step *= 2.0;
            loop {
                for (w, (b, g)) in model.weights.iter_mut().zip(base.iter().zip(&grad)) {
                    *w = b - step * g;
                }
                let trial = self.objective(&model, &z, y, None);
                if trial <= loss - 0.5 * step * gnorm2 || step < 1e-12 {
                    break;
                }
                step *= 0.5;
            }
            loss = self.objective(&model, &z, y, Some(&mut grad));
        }
        Ok(model)
    }
}

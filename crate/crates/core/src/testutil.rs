//! Fixtures shared by unit tests.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{softmax, Classifier, Trainer};
use crate::error::Result;
use crate::matrix::{Dataset, Matrix};
use crate::replay::UserId;

/// Softmax over negative squared distances to class centroids.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Centroids {
    c: Vec<Vec<f64>>,
    d: usize,
}

impl Classifier for Centroids {
    fn n_classes(&self) -> usize {
        self.c.len()
    }
    fn n_features(&self) -> usize {
        self.d
    }
    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(x.rows(), self.c.len());
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            for (k, c) in self.c.iter().enumerate() {
                row[k] = -c.iter().zip(x.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
            softmax(row);
        }
        Ok(out)
    }
}

pub(crate) struct CentroidTrainer;

impl Trainer for CentroidTrainer {
    type Model = Centroids;
    fn fit(&self, x: &Matrix, y: &[usize], k: usize, _seed: u64) -> Result<Centroids> {
        let mut c = alloc::vec![alloc::vec![0.0; x.cols()]; k];
        let mut n = alloc::vec![0.0f64; k];
        for (i, &l) in y.iter().enumerate() {
            n[l] += 1.0;
            for (a, v) in c[l].iter_mut().zip(x.row(i)) {
                *a += v;
            }
        }
        for (cl, nl) in c.iter_mut().zip(&n) {
            cl.iter_mut().for_each(|v| *v /= f64::max(*nl, 1.0));
        }
        Ok(Centroids { c, d: x.cols() })
    }
}

pub(crate) fn cohort(n_users: usize, per: usize, noise: f64, seed: u64) -> (Dataset, Dataset, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<UserId> = (0..n_users).map(|i| UserId::new(alloc::format!("u{i:03}"))).collect();
    let centers: Vec<Vec<f64>> = (0..n_users).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut make = |session: u32| {
        let mut d = Dataset::empty(users.clone(), 4);
        for (u, c) in centers.iter().enumerate() {
            for _ in 0..per {
                let row: Vec<f64> = c.iter().map(|m| m + noise * rng.random_range(-1.0..1.0)).collect();
                d.push(u, session, &row).unwrap();
            }
        }
        d
    };
    let train = make(0);
    let cluster = make(1);
    (train, cluster, centers)
}


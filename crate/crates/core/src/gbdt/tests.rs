use super::*;
use crate::classifier::Trainer;
use rand::{Rng, SeedableRng};

fn blobs(n_per: usize, k: usize, d: usize, spread: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let mut x = Matrix::zeros(0, d);
    let mut y = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per {
            let row: Vec<f64> = center.iter().map(|m| m + spread * rng.random_range(-1.0..1.0)).collect();
            x.push_row(&row).unwrap();
            y.push(c);
        }
    }
    (x, y)
}

fn small_cfg() -> GbdtConfig {
    GbdtConfig {
        n_estimators: 20,
        min_data_in_leaf: 3,
        min_child_weight: 1e-3,
        min_split_gain: 0.0,
        ..GbdtConfig::default()
    }
}

fn accuracy<M: Classifier>(m: &M, x: &Matrix, y: &[usize]) -> f64 {
    let p = m.predict_proba(x).unwrap();
    let hits = (0..x.rows())
        .filter(|&i| {
            let row = p.row(i);
            let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            best == y[i]
        })
        .count();
    hits as f64 / y.len() as f64
}

#[test]
fn defaults_validate() {
    GbdtConfig::default().validate().unwrap();
    let bad = GbdtConfig {
        max_bin: 300,
        ..GbdtConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn learns_separable_blobs_and_loss_decreases() {
    let (x, y) = blobs(30, 4, 6, 0.5, 1);
    let (m, loss) = GbdtTrainer::new(small_cfg()).fit_monitored(&x, &y, 4).unwrap();
    assert!(accuracy(&m, &x, &y) > 0.99);
    assert_eq!(loss.len(), 21);
    for w in loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{loss:?}");
    }
    let p = m.predict_proba(&x).unwrap();
    for i in 0..p.rows() {
        assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn deterministic_under_seed() {
    let (x, y) = blobs(20, 3, 5, 1.5, 2);
    let a = GbdtTrainer::new(small_cfg()).fit(&x, &y, 3, 9).unwrap();
    let b = GbdtTrainer::new(small_cfg()).fit(&x, &y, 3, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trees_are_preorder() {
    let (x, y) = blobs(30, 3, 4, 2.0, 3);
    let m = fit_gbdt(&x, &y, 3, &small_cfg()).unwrap();
    for t in m.trees.iter().flatten() {
        for (i, n) in t.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                assert_eq!(*left as usize, i + 1);
                assert!(*right as usize > i + 1);
            }
        }
        assert!(t.n_leaves() <= small_cfg().num_leaves);
    }
}

#[test]
fn binned_and_raw_prediction_agree() {
    let (x, y) = blobs(25, 3, 4, 2.0, 4);
    let m = fit_gbdt(&x, &y, 3, &small_cfg()).unwrap();
    let mapper = BinMapper { edges: m.bin_edges.clone() };
    let b = mapper.bin_matrix(&x);
    for t in m.trees.iter().flatten() {
        for i in 0..x.rows() {
            assert_eq!(t.predict(x.row(i)), t.predict_binned(&b, i));
        }
    }
}

#[test]
fn single_class_is_constant() {
    let (x, _) = blobs(30, 1, 3, 1.0, 5);
    let y = alloc::vec![2; 30];
    let m = fit_gbdt(&x, &y, 4, &small_cfg()).unwrap();
    let p = m.predict_proba(&x).unwrap();
    assert!(p.row(0) == [0.0, 0.0, 1.0, 0.0]);
    assert!(matches!(m.feature_importance(), Err(Error::Untrained)));
}

#[test]
fn importance_sums_to_one() {
    let (x, y) = blobs(30, 3, 5, 1.0, 6);
    let m = fit_gbdt(&x, &y, 3, &small_cfg()).unwrap();
    let imp = m.feature_importance().unwrap();
    assert!((imp.split_fraction.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!((imp.gain_fraction.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn goss_trains() {
    let (x, y) = blobs(40, 3, 4, 0.5, 7);
    let cfg = GbdtConfig {
        goss_enabled: true,
        min_data_in_leaf: 1,
        ..small_cfg()
    };
    let m = fit_gbdt(&x, &y, 3, &cfg).unwrap();
    assert!(accuracy(&m, &x, &y) > 0.95);
}

#[test]
fn rejects_bad_input() {
    let (x, y) = blobs(10, 2, 3, 1.0, 8);
    assert!(matches!(fit_gbdt(&x, &y[1..], 2, &small_cfg()), Err(Error::DimensionMismatch { .. })));
    assert!(matches!(fit_gbdt(&x, &y, 1, &small_cfg()), Err(Error::LabelOutOfRange { .. })));
    let m = fit_gbdt(&x, &y, 2, &small_cfg()).unwrap();
    assert!(m.predict_proba(&Matrix::zeros(1, 2)).is_err());
}

#[test]
fn logistic_learns_blobs() {
    let (x, y) = blobs(30, 4, 6, 0.5, 9);
    let m = LogisticTrainer::default().fit(&x, &y, 4, 0).unwrap();
    assert!(accuracy(&m, &x, &y) > 0.99);
}

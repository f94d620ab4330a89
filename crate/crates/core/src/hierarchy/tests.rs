use super::*;
use crate::testutil::{cohort, CentroidTrainer};

fn cfg(groups: usize) -> HierarchyConfig {
    HierarchyConfig {
        n_groups: groups,
        seed: 3,
        ..HierarchyConfig::default()
    }
}

#[test]
fn fuse_examples() {
    let m = |a: f64, b: f64| -> BTreeMap<UserId, f64> { [(UserId::new("u"), a), (UserId::new("v"), b)].into() };
    let f = fuse_layers(&m(0.5, 0.9), &m(0.5, 0.2), 0.0).unwrap();
    assert!((f[&UserId::new("u")] - libm::log(0.25)).abs() < 1e-12);
    assert_eq!(argmax_map(&f).unwrap().as_str(), "u");
    let tie = fuse_layers(&m(0.5, 0.5), &m(0.5, 0.5), 1e-12).unwrap();
    assert_eq!(argmax_map(&tie).unwrap().as_str(), "u");
    let other: BTreeMap<UserId, f64> = [(UserId::new("w"), 1.0), (UserId::new("u"), 0.0)].into();
    assert!(matches!(fuse_layers(&m(0.1, 0.2), &other, 0.0), Err(Error::KeyMismatch)));
}

#[test]
fn single_group_matches_model() {
    let (train, cluster, _) = cohort(6, 5, 0.3, 1);
    let h = train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(1)).unwrap();
    let direct = h.layers[0].models[0].predict_proba(&cluster.x).unwrap();
    let mapped = h.layers[0].predict(&cluster.x, 6).unwrap();
    assert_eq!(direct, mapped);
    let s = h.sample_scores(&cluster.x).unwrap();
    for i in 0..cluster.len() {
        for u in 0..6 {
            assert!((s.fused.get(i, u) - 2.0 * s.layer1.get(i, u)).abs() < 1e-9);
        }
    }
}

#[test]
fn layer_map_is_concatenation() {
    let (train, cluster, _) = cohort(10, 4, 0.5, 2);
    let h = train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(3)).unwrap();
    let map = h.layers[1].predict(&cluster.x, 10).unwrap();
    for (g, members) in h.layers[1].groups.iter().enumerate() {
        let p = h.layers[1].models[g].predict_proba(&cluster.x).unwrap();
        for i in 0..cluster.len() {
            for (c, &u) in members.iter().enumerate() {
                assert_eq!(map.get(i, u), p.get(i, c));
            }
        }
    }
}

#[test]
fn aggregation_is_sum_of_logs() {
    let (train, cluster, _) = cohort(12, 5, 1.5, 3);
    let h = train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(3)).unwrap();
    let rows: Vec<usize> = (0..5).collect();
    let x = cluster.x.select_rows(&rows);
    let id = h.identify(&x, Mode::TwoLayer).unwrap();
    let p1 = h.layers[0].predict(&x, 12).unwrap();
    let p2 = h.layers[1].predict(&x, 12).unwrap();
    let mut best = (0, f64::NEG_INFINITY);
    for u in 0..12 {
        let s: f64 = (0..5).map(|i| libm::log(p1.get(i, u) + 1e-12) + libm::log(p2.get(i, u) + 1e-12)).sum();
        if s > best.1 {
            best = (u, s);
        }
    }
    assert_eq!(id.predicted(), best.0);
    assert!((id.ranking[0].1 - best.1).abs() < 1e-9);
}

#[test]
fn separable_cohort_is_identified_and_components_are_consistent() {
    let (train, cluster, _) = cohort(20, 6, 1.2, 4);
    let h = train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(4)).unwrap();
    assert_eq!(h.layers[0].models.len(), 4);
    let mut seen = alloc::collections::BTreeSet::new();
    for c in &h.components {
        assert!(c.members.len() > 1);
        assert_eq!(c.model.n_classes(), c.members.len());
        for &m in &c.members {
            assert!(seen.insert(m), "components overlap");
        }
    }
    let by_user = cluster.rows_by_user();
    let scores = h.sample_scores(&cluster.x).unwrap();
    for (u, rows) in by_user.iter().enumerate() {
        let two = h.decide(&scores, &cluster.x, rows, Mode::TwoLayer).unwrap();
        let full = h.decide(&scores, &cluster.x, rows, Mode::Full).unwrap();
        assert_eq!(two.initial, full.initial);
        if let Some(ci) = full.component {
            assert!(h.components[ci].members.contains(&full.predicted()));
            assert!(h.components[ci].members.contains(&two.predicted()));
        } else {
            assert_eq!(two.predicted(), full.predicted());
        }
        assert_eq!(full.ranking.len(), 20);
        let _ = u;
    }
}

#[test]
fn add_user_retrains_two_models() {
    let (train, cluster, _) = cohort(9, 5, 0.3, 5);
    let mut h = train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(3)).unwrap();
    let before = h.clone();
    let rows = Matrix::from_rows(4, [[9.0, 9.0, 9.0, 9.0], [9.1, 9.0, 8.9, 9.0]]).unwrap();
    let targets = h.add_user(&CentroidTrainer, &train, UserId::new("new"), &rows).unwrap();
    for (l, &target) in targets.iter().enumerate() {
        for g in 0..3 {
            let same = Arc::ptr_eq(&h.layers[l].models[g], &before.layers[l].models[g]);
            assert_eq!(same, g != target);
        }
        assert_eq!(h.layers[l].groups[target].last(), Some(&9));
    }
    assert!(h.components_stale);
    let id = h.identify(&Matrix::from_rows(4, [[9.0, 9.0, 9.0, 9.1]]).unwrap(), Mode::Full).unwrap();
    assert_eq!(h.users[id.predicted()].as_str(), "new");
    assert!(matches!(
        h.add_user(&CentroidTrainer, &train, UserId::new("u001"), &rows),
        Err(Error::DuplicateUser(_))
    ));
}

#[test]
fn errors_surface() {
    let (train, cluster, _) = cohort(3, 2, 0.3, 6);
    assert!(matches!(
        train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(4)),
        Err(Error::TooManyGroups { .. })
    ));
    let h = train_hierarchy(&CentroidTrainer, &train, &cluster, &cfg(1)).unwrap();
    assert!(h.identify(&Matrix::zeros(0, 4), Mode::Full).is_err());
    assert!(h.identify(&Matrix::zeros(1, 3), Mode::Full).is_err());
}

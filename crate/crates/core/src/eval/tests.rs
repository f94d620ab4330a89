use super::*;
use crate::features::FeatureType;
use crate::gbdt::{GbdtConfig, GbdtTrainer};
use crate::hierarchy::{train_hierarchy, HierarchyConfig};
use crate::testutil::{cohort, CentroidTrainer};

fn cfg(groups: usize) -> HierarchyConfig {
    HierarchyConfig {
        n_groups: groups,
        seed: 1,
        ..HierarchyConfig::default()
    }
}

#[test]
fn separable_cohort_scores_perfectly() {
    let (train, test, _) = cohort(12, 6, 0.05, 1);
    let h = train_hierarchy(&CentroidTrainer, &train, &train, &cfg(3)).unwrap();
    let r = evaluate(&h, &test, &EvalOptions::default(), None).unwrap();
    assert_eq!(r.per_sample_accuracy, 1.0);
    assert_eq!(r.per_user_accuracy, 1.0);
    assert!(r.top_k_accuracies.values().all(|v| *v == 1.0));
    assert_eq!(r.users_evaluated, 12);
    assert_eq!(r.samples_evaluated, 72);
}

#[test]
fn nesting_and_partition_identity() {
    let (train, test, _) = cohort(30, 5, 2.5, 2);
    let h = train_hierarchy(&CentroidTrainer, &train, &train, &cfg(3)).unwrap();
    let r = evaluate(&h, &test, &EvalOptions::default(), None).unwrap();
    let t = &r.top_k_accuracies;
    assert!(t[&1] <= t[&3] && t[&3] <= t[&5]);
    assert_eq!(t[&1], r.per_user_accuracy);
    let attrs: BTreeMap<UserId, UserAttributes> = r
        .per_user
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let a = UserAttributes {
                headset: if i % 3 == 0 { String::new() } else { alloc::format!("h{}", i % 2) },
                replay_count: Some(i * 4),
                self_height: 1.4 + i as f64 * 0.02,
                ..UserAttributes::default()
            };
            (u.user.clone(), a)
        })
        .collect();
    let groups = impact_factors(&r.per_user, &attrs);
    for attr in ["headset", "platform", "country", "replay_count", "self_height", "handedness"] {
        let (mut c, mut n) = (0, 0);
        for ((a, _), b) in &groups {
            if a == attr {
                c += b.correct;
                n += b.total;
            }
        }
        assert_eq!(n, 30);
        assert!((frac(c, n) - r.per_user_accuracy).abs() < 1e-9);
    }
    assert!(groups.contains_key(&("headset".into(), UNKNOWN.into())));
    assert!(groups.contains_key(&("handedness".into(), UNKNOWN.into())));
}

#[test]
fn bands() {
    assert_eq!(replay_count_band(5), "<=5");
    assert_eq!(replay_count_band(6), "6-10");
    assert_eq!(replay_count_band(24), "11-24");
    assert_eq!(replay_count_band(99), "25-99");
    assert_eq!(replay_count_band(100), ">=100");
    assert_eq!(height_band(f64::NAN), UNKNOWN);
    assert_eq!(height_band(1.65), "1.6-1.7");
    assert_eq!(height_band(1.95), ">=1.9");
}

#[test]
fn random_guessing_is_near_chance() {
    // Identical centers: the model cannot tell users apart.
    let (mut train, test, _) = cohort(40, 10, 1.0, 3);
    let (_, shuffled, _) = cohort(40, 10, 1.0, 99);
    train.x = shuffled.x;
    for (i, l) in train.labels.iter_mut().enumerate() {
        *l = (i * 7 + 3) % 40;
    }
    let h = train_hierarchy(&CentroidTrainer, &train, &train, &cfg(1)).unwrap();
    let r = evaluate(&h, &test, &EvalOptions::default(), None).unwrap();
    let p = 1.0 / 40.0;
    let sd = libm::sqrt(p * (1.0 - p) / r.samples_evaluated as f64);
    assert!((r.per_sample_accuracy - p).abs() < 3.0 * sd + 0.02, "{}", r.per_sample_accuracy);
}

#[test]
fn session_leak_is_caught() {
    let (train, test, _) = cohort(4, 3, 0.1, 4);
    let h = train_hierarchy(&CentroidTrainer, &train, &train, &cfg(2)).unwrap();
    let mut sessions: BTreeMap<UserId, BTreeSet<u32>> = BTreeMap::new();
    for u in &test.users {
        sessions.insert(u.clone(), [1].into());
    }
    {
        let ok = session_check(&sessions);
        evaluate(&h, &test, &EvalOptions::default(), Some(&ok)).unwrap();
    }
    sessions.insert(test.users[2].clone(), [0].into());
    let bad = session_check(&sessions);
    assert!(matches!(
        evaluate(&h, &test, &EvalOptions::default(), Some(&bad)),
        Err(Error::SessionLeak { session: 1, .. })
    ));
}

#[test]
fn curve_point_one_is_single_sample() {
    let (train, test, _) = cohort(10, 8, 2.0, 5);
    let h = train_hierarchy(&CentroidTrainer, &train, &train, &cfg(2)).unwrap();
    let curve = accuracy_curve(&h, &test, &[1, 8], Mode::Full).unwrap();
    let single = evaluate(
        &h,
        &test,
        &EvalOptions {
            samples_per_user: 1,
            curve: alloc::vec![1],
            mode: Mode::Full,
        },
        None,
    )
    .unwrap();
    assert_eq!(curve[&1], single.per_user_accuracy);
    assert_eq!(single.per_user_accuracy, single.per_sample_accuracy);
}

#[test]
fn importance_fractions() {
    let (train, _, _) = cohort(6, 20, 0.5, 6);
    let gbdt = GbdtTrainer::new(GbdtConfig {
        n_estimators: 5,
        min_data_in_leaf: 2,
        min_child_weight: 1e-3,
        ..GbdtConfig::default()
    });
    let h = train_hierarchy(&gbdt, &train, &train, &cfg(2)).unwrap();
    let motion = importance_by_type(&h, &[FeatureType::Motion; 4]).unwrap();
    assert!((motion[&FeatureType::Motion] - 1.0).abs() < 1e-9);
    let mixed = [FeatureType::Context, FeatureType::Motion, FeatureType::StaticProxy, FeatureType::Motion];
    let m = importance_by_type(&h, &mixed).unwrap();
    assert!((m.values().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(matches!(
        importance_by_type(&h, &[FeatureType::Motion; 3]),
        Err(Error::SchemaMismatch { .. })
    ));
}

use std::collections::BTreeSet;

use motionid_core::features::{summarize_motion, Featurizer, Variant, WindowSpec};
use motionid_core::hierarchy::{bisect, connected_components, partition_users};
use motionid_core::session::{assign_splits, sessionize, ReplayStamp, SplitRatios, MAX_SESSION_GAP};
use motionid_core::synth::{generate_replay, generate_user, Priors};
use motionid_core::{Frame, Matrix, Pose, Scaler, UserId};
use proptest::prelude::*;

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-3.0f64..3.0),
        prop::array::uniform4(-1.0f64..1.0).prop_filter("non-zero", |q| q.iter().map(|v| v * v).sum::<f64>() > 0.01),
    )
        .prop_map(|(p, q)| {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if q[3] < 0.0 { -1.0 / n } else { 1.0 / n };
            Pose::from_components([p[0], p[1], p[2], q[0] * s, q[1] * s, q[2] * s, q[3] * s])
        })
}

fn frames_strategy() -> impl Strategy<Value = Vec<Frame>> {
    prop::collection::vec((pose_strategy(), pose_strategy(), pose_strategy()), 1..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (head, left_hand, right_hand))| Frame {
                time: i as f64 / 60.0,
                head,
                left_hand,
                right_hand,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn summary_is_order_invariant(frames in frames_strategy(), seed in any::<u64>()) {
        let mut rev = frames.clone();
        rev.reverse();
        let k = (seed as usize) % frames.len();
        rev.rotate_left(k);
        prop_assert_eq!(summarize_motion(&frames), summarize_motion(&rev));
    }

    #[test]
    fn scaler_standardizes_columns(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..60)) {
        let x = Matrix::from_rows(3, &rows).unwrap();
        let s = Scaler::fit(&x).unwrap();
        let z = s.transform(&x).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = z.column(j).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            // Constant columns keep scale 1 and become all zeros.
            prop_assert!((var - 1.0).abs() < 1e-9 || var < 1e-18);
        }
    }

    #[test]
    fn sessions_cover_and_respect_the_gap(gaps in prop::collection::vec(0.0f64..2000.0, 1..30)) {
        let mut t = 1.7e9;
        let stamps: Vec<ReplayStamp> = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| {
                t += g;
                let s = ReplayStamp { replay_id: format!("r{i:03}"), user_id: "u".into(), start: t, end: t + 120.0 };
                t += 120.0;
                s
            })
            .collect();
        let sessions = sessionize(&stamps).unwrap();
        let ids: Vec<&String> = sessions.iter().flat_map(|s| &s.replay_ids).collect();
        prop_assert_eq!(ids.len(), stamps.len());
        for w in sessions.windows(2) {
            prop_assert!(w[1].start_time - w[0].end_time > MAX_SESSION_GAP);
        }
        let expected = 1 + gaps.iter().skip(1).filter(|g| **g > MAX_SESSION_GAP).count();
        prop_assert_eq!(sessions.len(), expected);
    }

    #[test]
    fn splits_partition_sessions(n in 1usize..40, seed in any::<u64>()) {
        let sessions: Vec<_> = (0..n)
            .map(|i| ReplayStamp { replay_id: format!("r{i}"), user_id: "u".into(), start: i as f64 * 1e4, end: i as f64 * 1e4 + 60.0 })
            .collect();
        let sessions = sessionize(&sessions).unwrap();
        let a = assign_splits(&sessions, SplitRatios::default(), seed).unwrap();
        let all: Vec<&u32> = a.train.iter().chain(&a.cluster).chain(&a.validate).chain(&a.test).collect();
        let set: BTreeSet<&u32> = all.iter().copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(set.len(), n);
        prop_assert!(!a.train.is_empty());
        if n >= 2 {
            prop_assert!(!a.test.is_empty());
        }
    }

    #[test]
    fn partition_is_balanced_and_complete(n in 1usize..300, g in 1usize..12, seed in any::<u64>(), layer in 1u8..3) {
        prop_assume!(g <= n);
        let groups = partition_users(n, g, seed, layer).unwrap();
        prop_assert_eq!(groups.len(), g);
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = groups.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn bisect_respects_the_cap(n in 2usize..200, max in 2usize..50, seed in any::<u64>()) {
        let comp: Vec<usize> = (0..n).map(|i| i * 3).collect();
        let parts = bisect(&comp, max, seed);
        // Singleton parts are dropped; everything else is kept exactly once.
        prop_assert!(parts.iter().all(|p| p.len() <= max && p.len() >= 2));
        let all = parts.concat();
        let set: BTreeSet<usize> = all.iter().copied().collect();
        prop_assert_eq!(set.len(), all.len());
        prop_assert!(set.iter().all(|v| comp.contains(v)));
        prop_assert!(comp.len() - all.len() <= comp.len().div_ceil(2));
    }

    #[test]
    fn components_are_closed_under_edges(n in 1usize..60, edges in prop::collection::vec((0usize..60, 0usize..60), 0..80)) {
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let comps = connected_components(n, &edges);
        let mut seen = BTreeSet::new();
        for c in &comps {
            prop_assert!(c.len() > 1);
            for v in c {
                prop_assert!(seen.insert(*v));
            }
        }
        for (a, b) in &edges {
            if a != b {
                let ca = comps.iter().position(|c| c.contains(a));
                let cb = comps.iter().position(|c| c.contains(b));
                prop_assert!(ca.is_some() && ca == cb);
            }
        }
    }
}

#[test]
fn featurized_windows_have_declared_dims() {
    let profile = generate_user(3, 0, &Priors::default()).unwrap();
    let replay = generate_replay(&profile, 0, 20, 72.0, 1.0).unwrap();
    let f = Featurizer::new(WindowSpec::default()).unwrap();
    for v in Variant::ALL {
        let out = f.featurize_all(&[(0, &replay)], v);
        assert!(!out.is_empty(), "{v}");
        assert!(out.iter().all(|s| s.values.len() == v.dim() && s.user_id == UserId::from("user00000")));
    }
}

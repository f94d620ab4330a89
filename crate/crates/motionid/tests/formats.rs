mod common;

use std::io::BufReader;

use motionid::formats::{self, SplitRow};
use motionid::{midr, Error};
use motionid_core::gbdt::{fit_gbdt, GbdtConfig};
use motionid_core::session::Split;
use motionid_core::{Classifier, Matrix, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn midr_round_trip_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r = common::random_replay(&mut rng, 50, 10);
    let bytes = midr::to_bytes(&r).unwrap();
    assert!(midr::bit_identical(&r, &midr::from_bytes(&bytes).unwrap()));

    assert!(matches!(midr::from_bytes(b"NOPE!xx"), Err(Error::BadMagic(_))));
    assert!(matches!(midr::from_bytes(&bytes[..3]), Err(Error::Truncated)));
    assert!(matches!(midr::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated)));
    let mut v2 = bytes.clone();
    v2[5] = 2;
    assert!(matches!(midr::from_bytes(&v2), Err(Error::VersionMismatch { found: 2, expected: 1 })));

    let mut nan = r.clone();
    nan.frames[3].head.pos_x = f64::NAN;
    assert!(midr::to_bytes(&nan).is_err());
}

#[test]
fn nan_pose_is_reported_with_its_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = common::random_replay(&mut rng, 5, 0);
    let mut bytes = midr::to_bytes(&r).unwrap();
    // The last frame's head pos_x sits 8 + 7*4*3 bytes before the event count.
    let frame_len = 8 + 21 * 4;
    let at = bytes.len() - 8 - frame_len + 8;
    bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(midr::from_bytes(&bytes), Err(Error::NanPose { frame: 4 })));
}

#[test]
fn gbdt_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Vec<f64>> = (0..120).map(|i| (0..4).map(|j| (i % 3) as f64 * (j as f64 + 1.0) + rng.random_range(-0.3..0.3)).collect()).collect();
    let y: Vec<usize> = (0..120).map(|i| i % 3).collect();
    let x = Matrix::from_rows(4, &rows).unwrap();
    let cfg = GbdtConfig { n_estimators: 10, min_data_in_leaf: 3, min_child_weight: 1e-3, ..GbdtConfig::default() };
    let m = fit_gbdt(&x, &y, 3, &cfg).unwrap();
    let bytes = formats::gbdt_bytes(&m);
    let back = formats::read_gbdt(std::path::Path::new("m.gbdt"), BufReader::new(&bytes[..])).unwrap();
    assert_eq!(formats::gbdt_bytes(&back), bytes);
    let (a, b) = (m.predict_proba(&x).unwrap(), back.predict_proba(&x).unwrap());
    assert!(a.as_slice().iter().zip(b.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));

    let text = String::from_utf8(bytes).unwrap().replacen("GBDT1", "GBDT9", 1);
    assert!(formats::read_gbdt(std::path::Path::new("m.gbdt"), BufReader::new(text.as_bytes())).is_err());
}

#[test]
fn splits_round_trip() {
    let rows = vec![
        SplitRow { user_id: UserId::from("a"), session_id: 0, split: Split::Train, start: 1.5, end: 2.5, replay_ids: vec!["r1".into(), "r2".into()] },
        SplitRow { user_id: UserId::from("a"), session_id: 1, split: Split::Test, start: 1e9, end: 1e9 + 1.0, replay_ids: vec!["r3".into()] },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("splits.csv");
    let mut buf = Vec::new();
    formats::write_splits(&mut buf, &rows).unwrap();
    std::fs::write(&path, buf).unwrap();
    let back = formats::read_splits(&path).unwrap();
    assert_eq!(back, rows);
    let a = &formats::assignments(&back)[&UserId::from("a")];
    assert!(a.train.contains(&0) && a.test.contains(&1));
}

#[test]
fn features_round_trip_exactly() {
    use motionid_core::features::Variant;
    use motionid_core::FeatureVector;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<FeatureVector> = (0..25)
        .map(|i| FeatureVector {
            user_id: UserId(format!("user,{i}")),
            session_id: i % 4,
            event_time: rng.random_range(0.0..300.0),
            variant: Variant::Context22,
            values: (0..22).map(|_| rng.random_range(-1e6..1e6) / 3.0).collect(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let mut buf = Vec::new();
    formats::write_features(&mut buf, Variant::Context22, &rows).unwrap();
    std::fs::write(&path, &buf).unwrap();
    let (v, back) = formats::read_features(&path).unwrap();
    assert_eq!(v, Variant::Context22);
    assert_eq!(back, rows);

    let mut wrong = rows[0].clone();
    wrong.values.pop();
    assert!(formats::write_features(Vec::new(), Variant::Context22, &[wrong]).is_err());
}

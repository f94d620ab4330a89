//! Random valid replays whose values are all exactly representable in the
//! container.

#![allow(dead_code)]

use motionid_core::replay::{Color, Handedness};
use motionid_core::{Frame, NoteEvent, Pose, Replay, ReplayMetadata, UserId};
use rand::{Rng, RngCore};

fn q(v: f64) -> f64 {
    f64::from(v as f32)
}

fn random_string<R: RngCore>(rng: &mut R, max: usize) -> String {
    const POOL: &[char] = &['a', 'Z', '0', '9', ' ', '_', '-', '/', 'é', 'ß', '中', '🎵', ',', '"', '\n'];
    let n = rng.random_range(0..=max);
    (0..n).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

pub fn random_pose<R: RngCore>(rng: &mut R) -> Pose {
    let mut c = [0.0; 7];
    for v in c.iter_mut().take(3) {
        *v = q(rng.random_range(-2.5..2.5));
    }
    let mut quat = [0.0f64; 4];
    loop {
        for v in &mut quat {
            *v = rng.random_range(-1.0..1.0);
        }
        let n = quat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 {
            quat.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    if quat[3] < 0.0 {
        quat.iter_mut().for_each(|v| *v = -*v);
    }
    for (d, s) in c[3..].iter_mut().zip(quat) {
        *d = q(s);
    }
    Pose::from_components(c)
}

/// A valid replay with `n_frames` frames at a random rate in 30-144 Hz.
pub fn random_replay<R: RngCore>(rng: &mut R, n_frames: usize, n_events: usize) -> Replay {
    let dt = 1.0 / rng.random_range(30.0..144.0);
    let t0: f64 = rng.random_range(0.0..5.0);
    let frames: Vec<Frame> = (0..n_frames)
        .map(|i| Frame {
            time: t0 + i as f64 * dt + rng.random_range(0.0..dt * 0.1),
            head: random_pose(rng),
            left_hand: random_pose(rng),
            right_hand: random_pose(rng),
        })
        .collect();
    let (a, b) = (frames[0].time, frames[n_frames - 1].time);
    let mut times: Vec<f64> = (0..n_events).map(|_| rng.random_range(a..=b)).collect();
    times.sort_by(f64::total_cmp);
    let events = times
        .into_iter()
        .map(|t| {
            let mut e = NoteEvent {
                event_time: t,
                line_index: rng.random_range(0..4),
                line_layer: rng.random_range(0..3),
                color: Color::from_u8(rng.random_range(0..2)).unwrap(),
                cut_direction: rng.random_range(0..9),
                correct_saber: rng.random_bool(0.9),
                ..NoteEvent::default()
            };
            let mut k = [0.0; 16];
            let missed = rng.random_bool(0.1);
            for v in &mut k {
                *v = if missed { f64::NAN } else { q(rng.random_range(-50.0..50.0)) };
            }
            e.set_kinematics(k);
            e
        })
        .collect();
    let mut extra = std::collections::BTreeMap::new();
    for i in 0..rng.random_range(0..4) {
        extra.insert(format!("x-{i}-{}", random_string(rng, 5)), random_string(rng, 12));
    }
    Replay {
        metadata: ReplayMetadata {
            user_id: UserId(format!("u{}{}", rng.random_range(0..1000), random_string(rng, 6))),
            platform: random_string(rng, 8),
            runtime: random_string(rng, 8),
            headset: random_string(rng, 10),
            controller: random_string(rng, 10),
            self_height: if rng.random_bool(0.2) { f64::NAN } else { rng.random_range(1.2..2.2) },
            handedness: if rng.random_bool(0.5) { Handedness::Left } else { Handedness::Right },
            country: random_string(rng, 2),
            recorded_at: rng.random_range(-1_000_000_000_000i64..4_000_000_000_000),
            fps_nominal: rng.random_range(30.0..144.0),
            extra,
        },
        frames,
        events,
    }
}

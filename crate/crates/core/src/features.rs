//! Hybrid featurization of note events.
//!
//! Motion summaries are laid out object-major (head, left hand, right hand),
//! then by component (position xyz, then orientation), then by statistic
//! (min, max, mean, median, population stdev).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::replay::{Frame, NoteEvent, Replay, UserId, CONTEXT_DIM};

pub const OBJECTS: usize = 3;
pub const STATS: usize = 5;
pub const QUAT_COMPONENTS: usize = 7;
pub const EULER_COMPONENTS: usize = 6;
pub const QUAT_MOTION_DIM: usize = OBJECTS * QUAT_COMPONENTS * STATS;
pub const EULER_MOTION_DIM: usize = OBJECTS * EULER_COMPONENTS * STATS;

pub const OBJECT_NAMES: [&str; OBJECTS] = ["head", "left_hand", "right_hand"];
pub const QUAT_COMPONENT_NAMES: [&str; QUAT_COMPONENTS] =
    ["pos_x", "pos_y", "pos_z", "rot_i", "rot_j", "rot_k", "rot_w"];
pub const STAT_NAMES: [&str; STATS] = ["min", "max", "mean", "median", "stdev"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Motion only, orientation as Euler angles.
    Euler90,
    /// Motion only, orientation as quaternions.
    Quat105,
    /// Event context only.
    Context22,
    /// Context plus one centered motion window.
    Light127,
    /// Context plus separate pre- and post-event motion windows.
    Full232,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Euler90,
        Variant::Quat105,
        Variant::Context22,
        Variant::Light127,
        Variant::Full232,
    ];

    pub fn dim(&self) -> usize {
        match self {
            Variant::Euler90 => EULER_MOTION_DIM,
            Variant::Quat105 => QUAT_MOTION_DIM,
            Variant::Context22 => CONTEXT_DIM,
            Variant::Light127 => CONTEXT_DIM + QUAT_MOTION_DIM,
            Variant::Full232 => CONTEXT_DIM + 2 * QUAT_MOTION_DIM,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Euler90 => "euler90",
            Variant::Quat105 => "quat105",
            Variant::Context22 => "context22",
            Variant::Light127 => "light127",
            Variant::Full232 => "full232",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Motion window sizes around an event.
///
/// The full hybrid uses `[t - pre_span, t]` and `[t, t + post_span]`; the
/// centered window of the light hybrid and the motion-only variants is
/// `[t - pre_span / 2, t + post_span / 2]`. All bounds are closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub pre_span: f64,
    pub post_span: f64,
    pub min_frames: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            pre_span: 1.0,
            post_span: 1.0,
            min_frames: 10,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pre_span > 0.0 && self.post_span > 0.0) || self.min_frames < 2 {
            return Err(Error::InvalidConfig(
                "window spans must be positive and min_frames at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Why an event produced no sample. Not an error: the event is skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dropped {
    TooFewFrames { have: usize, need: usize },
    MissingCutData,
}

/// A featurized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub user_id: UserId,
    pub session_id: u32,
    pub event_time: f64,
    pub variant: Variant,
    pub values: Vec<f64>,
}

fn summarize<const C: usize>(frames: &[Frame], components: impl Fn(&crate::replay::Pose) -> [f64; C]) -> Vec<f64> {
    let mut out = Vec::with_capacity(OBJECTS * C * STATS);
    let mut buf = alloc::vec![0.0; frames.len()];
    for obj in 0..OBJECTS {
        let per_frame: Vec<[f64; C]> = frames.iter().map(|f| components(f.poses()[obj])).collect();
        for c in 0..C {
            for (b, v) in buf.iter_mut().zip(&per_frame) {
                *b = v[c];
            }
            out.extend_from_slice(&math::summary(&mut buf));
        }
    }
    out
}

/// 105 summary statistics over the frames of one window.
///
/// Panics on an empty window; callers check `min_frames` first.
pub fn summarize_motion(frames: &[Frame]) -> Vec<f64> {
    assert!(!frames.is_empty(), "empty motion window");
    summarize(frames, |p| p.components())
}

/// The 90-dimensional baseline: orientation as extrinsic X-Y-Z Euler angles.
pub fn summarize_motion_euler(frames: &[Frame]) -> Vec<f64> {
    assert!(!frames.is_empty(), "empty motion window");
    summarize(frames, |p| {
        let e = p.euler_xyz();
        [p.pos_x, p.pos_y, p.pos_z, e[0], e[1], e[2]]
    })
}

/// Index of one statistic inside a 105-dim quaternion motion summary.
pub fn motion_index(object: usize, component: usize, stat: usize) -> usize {
    (object * QUAT_COMPONENTS + component) * STATS + stat
}

pub fn context_features(event: &NoteEvent) -> core::result::Result<[f64; CONTEXT_DIM], Dropped> {
    if !event.has_cut_data() {
        return Err(Dropped::MissingCutData);
    }
    Ok(event.context_values())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Featurizer {
    pub window: WindowSpec,
}

impl Featurizer {
    pub fn new(window: WindowSpec) -> Result<Self> {
        window.validate()?;
        Ok(Featurizer { window })
    }

    /// Frames with `start <= time <= end`.
    pub fn frames_between<'a>(&self, frames: &'a [Frame], start: f64, end: f64) -> &'a [Frame] {
        let lo = frames.partition_point(|f| f.time < start);
        let hi = frames.partition_point(|f| f.time <= end);
        &frames[lo..hi.max(lo)]
    }

    fn filled<'a>(&self, frames: &'a [Frame], start: f64, end: f64) -> core::result::Result<&'a [Frame], Dropped> {
        let w = self.frames_between(frames, start, end);
        if w.len() < self.window.min_frames {
            return Err(Dropped::TooFewFrames {
                have: w.len(),
                need: self.window.min_frames,
            });
        }
        Ok(w)
    }

    fn centered<'a>(&self, replay: &'a Replay, t: f64) -> core::result::Result<&'a [Frame], Dropped> {
        self.filled(
            &replay.frames,
            t - self.window.pre_span / 2.0,
            t + self.window.post_span / 2.0,
        )
    }

    /// Context features followed by the motion summary of the centered window.
    pub fn featurize_light(&self, replay: &Replay, event: &NoteEvent) -> core::result::Result<Vec<f64>, Dropped> {
        let ctx = context_features(event)?;
        let w = self.centered(replay, event.event_time)?;
        let mut out = Vec::with_capacity(Variant::Light127.dim());
        out.extend_from_slice(&ctx);
        out.extend(summarize_motion(w));
        Ok(out)
    }

    /// Context features, then the pre-event window summary, then the
    /// post-event window summary. A frame exactly at the event time is part
    /// of both windows.
    pub fn featurize_full(&self, replay: &Replay, event: &NoteEvent) -> core::result::Result<Vec<f64>, Dropped> {
        let ctx = context_features(event)?;
        let t = event.event_time;
        let pre = self.filled(&replay.frames, t - self.window.pre_span, t)?;
        let post = self.filled(&replay.frames, t, t + self.window.post_span)?;
        let mut out = Vec::with_capacity(Variant::Full232.dim());
        out.extend_from_slice(&ctx);
        out.extend(summarize_motion(pre));
        out.extend(summarize_motion(post));
        Ok(out)
    }

    pub fn featurize(&self, replay: &Replay, event: &NoteEvent, variant: Variant) -> core::result::Result<Vec<f64>, Dropped> {
        match variant {
            Variant::Euler90 => {
                context_features(event)?;
                Ok(summarize_motion_euler(self.centered(replay, event.event_time)?))
            }
            Variant::Quat105 => {
                context_features(event)?;
                Ok(summarize_motion(self.centered(replay, event.event_time)?))
            }
            Variant::Context22 => {
                // Context-only samples still need telemetry around the event so
                // every variant draws from the same pool of events.
                let ctx = context_features(event)?;
                self.centered(replay, event.event_time)?;
                Ok(ctx.to_vec())
            }
            Variant::Light127 => self.featurize_light(replay, event),
            Variant::Full232 => self.featurize_full(replay, event),
        }
    }

    /// Cheap check that [`Featurizer::featurize`] would succeed.
    pub fn is_featurizable(&self, replay: &Replay, event: &NoteEvent, variant: Variant) -> bool {
        if !event.has_cut_data() {
            return false;
        }
        let t = event.event_time;
        let n = |a: f64, b: f64| self.frames_between(&replay.frames, a, b).len() >= self.window.min_frames;
        match variant {
            Variant::Full232 => n(t - self.window.pre_span, t) && n(t, t + self.window.post_span),
            _ => n(t - self.window.pre_span / 2.0, t + self.window.post_span / 2.0),
        }
    }

    /// Every featurizable event of the given replays, in replay then event order.
    pub fn featurize_all(
        &self,
        replays: &[(u32, &Replay)],
        variant: Variant,
    ) -> Vec<FeatureVector> {
        let mut out = Vec::new();
        for (session, r) in replays {
            for e in &r.events {
                if let Ok(values) = self.featurize(r, e, variant) {
                    out.push(FeatureVector {
                        user_id: r.metadata.user_id.clone(),
                        session_id: *session,
                        event_time: e.event_time,
                        variant,
                        values,
                    });
                }
            }
        }
        out
    }

    /// Uniformly samples up to `per_user` featurizable events without
    /// replacement from the replays whose session is in `sessions`.
    ///
    /// `replays` pairs each replay with its session id and must all belong to
    /// one user. The selection is returned in replay then event order and is
    /// fully determined by `seed`. With fewer candidates than `per_user`,
    /// all of them are returned.
    pub fn sample_events(
        &self,
        replays: &[(u32, &Replay)],
        sessions: &BTreeSet<u32>,
        variant: Variant,
        per_user: usize,
        seed: u64,
    ) -> Result<Vec<FeatureVector>> {
        let mut candidates: Vec<(usize, usize)> = Vec::new();
        for (ri, (session, r)) in replays.iter().enumerate() {
            if !sessions.contains(session) {
                continue;
            }
            for (ei, e) in r.events.iter().enumerate() {
                if self.is_featurizable(r, e, variant) {
                    candidates.push((ri, ei));
                }
            }
        }
        let user = replays
            .first()
            .map(|(_, r)| r.metadata.user_id.clone())
            .unwrap_or_default();
        if candidates.is_empty() {
            return Err(Error::NoSamples(user.0));
        }
        let mut picked: Vec<usize> = if candidates.len() <= per_user {
            (0..candidates.len()).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(math::mix_seed(seed, math::hash_str(&user.0), 0xfea7));
            rand::seq::index::sample(&mut rng, candidates.len(), per_user).into_vec()
        };
        picked.sort_unstable();

        let mut out = Vec::with_capacity(picked.len());
        for i in picked {
            let (ri, ei) = candidates[i];
            let (session, r) = replays[ri];
            let e = &r.events[ei];
            let values = self
                .featurize(r, e, variant)
                .expect("candidate passed the featurizability check");
            out.push(FeatureVector {
                user_id: r.metadata.user_id.clone(),
                session_id: session,
                event_time: e.event_time,
                variant,
                values,
            });
        }
        Ok(out)
    }

    /// [`Featurizer::sample_events`] over a user's training sessions.
    pub fn sample_training_events(
        &self,
        replays: &[(u32, &Replay)],
        train_sessions: &BTreeSet<u32>,
        variant: Variant,
        per_user: usize,
        seed: u64,
    ) -> Result<Vec<FeatureVector>> {
        self.sample_events(replays, train_sessions, variant, per_user, seed)
    }
}

/// Coarse grouping of feature indices used for gain attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureType {
    /// Motion statistics that effectively measure fixed physiology.
    StaticProxy,
    Motion,
    Context,
}

impl FeatureType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureType::StaticProxy => "static-proxy",
            FeatureType::Motion => "motion",
            FeatureType::Context => "context",
        }
    }
}

/// Per-index feature types for a variant.
///
/// `static_proxy` lists `(object, component, stat)` triples, in the 105-dim
/// quaternion layout, that count as physiology proxies in every motion
/// window of the variant. Euler layouts map position components the same way
/// and orientation components by position in the layout.
pub fn feature_types(variant: Variant, static_proxy: &[(usize, usize, usize)]) -> Vec<FeatureType> {
    let motion_block = |components: usize| -> Vec<FeatureType> {
        let mut v = alloc::vec![FeatureType::Motion; OBJECTS * components * STATS];
        for &(o, c, s) in static_proxy {
            if o < OBJECTS && c < components && s < STATS {
                v[(o * components + c) * STATS + s] = FeatureType::StaticProxy;
            }
        }
        v
    };
    let ctx = alloc::vec![FeatureType::Context; CONTEXT_DIM];
    match variant {
        Variant::Euler90 => motion_block(EULER_COMPONENTS),
        Variant::Quat105 => motion_block(QUAT_COMPONENTS),
        Variant::Context22 => ctx,
        Variant::Light127 => [ctx, motion_block(QUAT_COMPONENTS)].concat(),
        Variant::Full232 => [ctx, motion_block(QUAT_COMPONENTS), motion_block(QUAT_COMPONENTS)].concat(),
    }
}

/// Head height statistics (everything but the spread): a proxy for the
/// player's stature.
pub const HEAD_HEIGHT_PROXY: [(usize, usize, usize); 4] = [(0, 1, 0), (0, 1, 1), (0, 1, 2), (0, 1, 3)];

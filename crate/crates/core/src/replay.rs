//! Canonical in-memory replay model.
//!
//! Poses and cut kinematics are held as `f64`; the on-disk container stores
//! them as `f32`, so a replay round-trips bit-exactly whenever its values are
//! representable in single precision (everything loaded from a container or
//! produced by the synthetic generator is).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::borrow::Borrow;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;

/// Quaternions further than this from unit norm are renormalized by
/// [`Pose::canonicalize`]. Anything closer is left alone, which keeps
/// canonicalization idempotent and single-precision values untouched.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Accepted quaternion norm band for a valid replay.
pub const NORM_INVARIANT: f64 = 1e-3;

/// Opaque user identifier. Ordering is byte-lexicographic, which is also the
/// tie-breaking order used everywhere a ranking needs one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(s: impl Into<String>) -> Self {
        UserId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_string())
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId(s)
    }
}

impl Borrow<str> for UserId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Position (meters) and orientation (unit quaternion, scalar last) of one
/// tracked object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub pos_x: f64,
    pub pos_y: f64,
    pub pos_z: f64,
    pub rot_i: f64,
    pub rot_j: f64,
    pub rot_k: f64,
    pub rot_w: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        pos_x: 0.0,
        pos_y: 0.0,
        pos_z: 0.0,
        rot_i: 0.0,
        rot_j: 0.0,
        rot_k: 0.0,
        rot_w: 1.0,
    };

    /// Components in storage order: position xyz, then quaternion i, j, k, w.
    pub fn components(&self) -> [f64; 7] {
        [
            self.pos_x, self.pos_y, self.pos_z, self.rot_i, self.rot_j, self.rot_k, self.rot_w,
        ]
    }

    pub fn from_components(c: [f64; 7]) -> Self {
        Pose {
            pos_x: c[0],
            pos_y: c[1],
            pos_z: c[2],
            rot_i: c[3],
            rot_j: c[4],
            rot_k: c[5],
            rot_w: c[6],
        }
    }

    pub fn quat_norm(&self) -> f64 {
        math::sqrt(
            self.rot_i * self.rot_i
                + self.rot_j * self.rot_j
                + self.rot_k * self.rot_k
                + self.rot_w * self.rot_w,
        )
    }

    /// Normalizes the quaternion (when off unit norm by more than
    /// [`NORM_TOLERANCE`]) and flips its sign so that `rot_w >= 0`.
    pub fn canonicalize(&mut self) -> Result<()> {
        if self.components().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidReplay("non-finite pose component".into()));
        }
        let n = self.quat_norm();
        if n == 0.0 {
            return Err(Error::InvalidReplay("zero quaternion".into()));
        }
        if math::abs(n - 1.0) > NORM_TOLERANCE {
            self.rot_i /= n;
            self.rot_j /= n;
            self.rot_k /= n;
            self.rot_w /= n;
        }
        if self.rot_w < 0.0 {
            self.rot_i = -self.rot_i;
            self.rot_j = -self.rot_j;
            self.rot_k = -self.rot_k;
            self.rot_w = -self.rot_w;
        }
        Ok(())
    }

    /// Extrinsic X-Y-Z Euler angles (radians) of the orientation: rotation
    /// about the fixed X axis, then Y, then Z.
    pub fn euler_xyz(&self) -> [f64; 3] {
        let (x, y, z, w) = (self.rot_i, self.rot_j, self.rot_k, self.rot_w);
        let rx = math::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
        let s = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
        let ry = math::asin(s);
        let rz = math::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
        [rx, ry, rz]
    }
}

/// One telemetry frame: all three tracked objects at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Frame {
    /// Seconds since replay start.
    pub time: f64,
    pub head: Pose,
    pub left_hand: Pose,
    pub right_hand: Pose,
}

impl Frame {
    pub fn poses(&self) -> [&Pose; 3] {
        [&self.head, &self.left_hand, &self.right_hand]
    }

    pub fn poses_mut(&mut self) -> [&mut Pose; 3] {
        [&mut self.head, &mut self.left_hand, &mut self.right_hand]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Color {
    #[default]
    Left = 0,
    Right = 1,
}

impl Color {
    pub fn from_u8(v: u8) -> Option<Color> {
        match v {
            0 => Some(Color::Left),
            1 => Some(Color::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum Handedness {
    Left,
    #[default]
    Right,
}

impl Handedness {
    pub fn as_str(&self) -> &'static str {
        match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        }
    }
}

/// Number of scalars a note event contributes to the context features.
pub const CONTEXT_DIM: usize = 22;

/// One block-cut stimulus and the player's response to it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoteEvent {
    pub event_time: f64,
    /// Column 0-3.
    pub line_index: u8,
    /// Row 0-2.
    pub line_layer: u8,
    pub color: Color,
    /// 0-8; 8 is "any direction".
    pub cut_direction: u8,
    pub correct_saber: bool,
    /// Degrees.
    pub cut_angle_deviation: f64,
    /// Meters per second.
    pub saber_speed: f64,
    pub saber_dir: [f64; 3],
    pub cut_point: [f64; 3],
    pub cut_normal: [f64; 3],
    pub distance_to_center: f64,
    /// Seconds.
    pub time_deviation: f64,
    pub before_cut_rating: f64,
    pub after_cut_rating: f64,
    pub accuracy_score: f64,
}

impl NoteEvent {
    /// The sixteen real-valued cut kinematics in declaration order.
    pub fn kinematics(&self) -> [f64; 16] {
        [
            self.cut_angle_deviation,
            self.saber_speed,
            self.saber_dir[0],
            self.saber_dir[1],
            self.saber_dir[2],
            self.cut_point[0],
            self.cut_point[1],
            self.cut_point[2],
            self.cut_normal[0],
            self.cut_normal[1],
            self.cut_normal[2],
            self.distance_to_center,
            self.time_deviation,
            self.before_cut_rating,
            self.after_cut_rating,
            self.accuracy_score,
        ]
    }

    pub fn set_kinematics(&mut self, k: [f64; 16]) {
        self.cut_angle_deviation = k[0];
        self.saber_speed = k[1];
        self.saber_dir = [k[2], k[3], k[4]];
        self.cut_point = [k[5], k[6], k[7]];
        self.cut_normal = [k[8], k[9], k[10]];
        self.distance_to_center = k[11];
        self.time_deviation = k[12];
        self.before_cut_rating = k[13];
        self.after_cut_rating = k[14];
        self.accuracy_score = k[15];
    }

    /// Missed notes carry no cut kinematics; they are stored as NaN.
    pub fn has_cut_data(&self) -> bool {
        self.kinematics().iter().all(|v| v.is_finite())
    }

    /// The 22 context scalars: event time, the five categorical fields
    /// encoded numerically, then the cut kinematics.
    pub fn context_values(&self) -> [f64; CONTEXT_DIM] {
        let mut out = [0.0; CONTEXT_DIM];
        out[0] = self.event_time;
        out[1] = f64::from(self.line_index);
        out[2] = f64::from(self.line_layer);
        out[3] = self.color as u8 as f64;
        out[4] = f64::from(self.cut_direction);
        out[5] = if self.correct_saber { 1.0 } else { 0.0 };
        out[6..].copy_from_slice(&self.kinematics());
        out
    }
}

/// Device and player attributes. Never used as model input; only the
/// impact-factor analysis reads them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayMetadata {
    pub user_id: UserId,
    pub platform: String,
    pub runtime: String,
    pub headset: String,
    pub controller: String,
    /// Meters; NaN when unknown.
    pub self_height: f64,
    pub handedness: Handedness,
    /// ISO 3166 alpha-2, empty when unknown.
    pub country: String,
    /// Unix seconds, UTC.
    pub recorded_at: i64,
    pub fps_nominal: f64,
    /// Keys this crate does not interpret, kept for lossless round trips.
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Replay {
    pub metadata: ReplayMetadata,
    pub frames: Vec<Frame>,
    pub events: Vec<NoteEvent>,
}

impl Replay {
    /// Normalizes and sign-canonicalizes every pose quaternion.
    pub fn canonicalize(&mut self) -> Result<()> {
        for (i, f) in self.frames.iter_mut().enumerate() {
            for p in f.poses_mut() {
                p.canonicalize()
                    .map_err(|e| Error::InvalidReplay(format!("frame {i}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Checks every structural invariant a stored replay must satisfy.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidReplay(m.to_string()));
        if self.metadata.user_id.0.is_empty() {
            return bad("empty user id");
        }
        if self.frames.is_empty() {
            return bad("no frames");
        }
        for w in self.frames.windows(2) {
            if !(w[1].time > w[0].time) {
                return bad("frames not monotonic");
            }
        }
        for f in &self.frames {
            if !f.time.is_finite() {
                return bad("non-finite frame time");
            }
            for p in f.poses() {
                if p.components().iter().any(|c| !c.is_finite()) {
                    return bad("non-finite pose component");
                }
                if math::abs(p.quat_norm() - 1.0) > NORM_INVARIANT {
                    return bad("quaternion not unit norm");
                }
                if p.rot_w < 0.0 {
                    return bad("quaternion not sign-canonical");
                }
            }
        }
        let (t0, t1) = (self.frames[0].time, self.frames[self.frames.len() - 1].time);
        for w in self.events.windows(2) {
            if w[1].event_time < w[0].event_time {
                return bad("events not sorted");
            }
        }
        for e in &self.events {
            if !(e.event_time >= t0 && e.event_time <= t1) {
                return bad("event outside frame range");
            }
            if e.line_index > 3 || e.line_layer > 2 || e.cut_direction > 8 {
                return bad("note grid field out of range");
            }
        }
        Ok(())
    }

    /// Seconds covered by the telemetry.
    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }

    pub fn start_time(&self) -> f64 {
        self.metadata.recorded_at as f64
    }

    pub fn end_time(&self) -> f64 {
        self.start_time() + self.frames.last().map_or(0.0, |f| f.time)
    }

    /// Median inter-frame interval in seconds, `None` with fewer than two frames.
    pub fn median_frame_interval(&self) -> Option<f64> {
        if self.frames.len() < 2 {
            return None;
        }
        let mut d: Vec<f64> = self.frames.windows(2).map(|w| w[1].time - w[0].time).collect();
        d.sort_unstable_by(f64::total_cmp);
        let n = d.len();
        Some(if n % 2 == 1 {
            d[n / 2]
        } else {
            (d[n / 2 - 1] + d[n / 2]) / 2.0
        })
    }

    /// True when the median frame interval falls outside 30-144 Hz.
    pub fn is_low_quality(&self) -> bool {
        const SLACK: f64 = 1e-9;
        match self.median_frame_interval() {
            None => true,
            Some(dt) => !(1.0 / 144.0 - SLACK..=1.0 / 30.0 + SLACK).contains(&dt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64) -> Frame {
        Frame {
            time: t,
            ..Frame::default()
        }
    }

    fn replay(frames: Vec<Frame>) -> Replay {
        Replay {
            metadata: ReplayMetadata {
                user_id: "u".into(),
                ..Default::default()
            },
            frames,
            events: Vec::new(),
        }
    }

    #[test]
    fn canonicalize_flips_negative_w() {
        let mut p = Pose {
            rot_i: 0.0,
            rot_j: 0.6,
            rot_k: 0.0,
            rot_w: -0.8,
            ..Pose::IDENTITY
        };
        p.canonicalize().unwrap();
        assert_eq!((p.rot_j, p.rot_w), (-0.6, 0.8));
    }

    #[test]
    fn canonicalize_normalizes_half_norm() {
        let mut p = Pose::from_components([0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25]);
        p.canonicalize().unwrap();
        assert!((p.quat_norm() - 1.0).abs() < 1e-12);
        let once = p;
        p.canonicalize().unwrap();
        assert_eq!(once, p);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        let mut p = Pose::from_components([0.0; 7]);
        assert!(p.canonicalize().is_err());
    }

    #[test]
    fn identity_has_zero_euler() {
        assert_eq!(Pose::IDENTITY.euler_xyz(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn euler_of_quarter_turn_about_x() {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let p = Pose {
            rot_i: h,
            rot_w: h,
            ..Pose::IDENTITY
        };
        let e = p.euler_xyz();
        assert!((e[0] - core::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12 && e[2].abs() < 1e-12);
    }

    #[test]
    fn unsorted_frames_fail_validation() {
        let r = replay(alloc::vec![frame(0.0), frame(0.2), frame(0.1)]);
        match r.validate() {
            Err(Error::InvalidReplay(m)) => assert_eq!(m, "frames not monotonic"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn low_quality_flag_uses_median_interval() {
        let ok = replay((0..10).map(|i| frame(i as f64 / 60.0)).collect());
        assert!(!ok.is_low_quality());
        let edge = replay((0..10).map(|i| frame(i as f64 / 144.0)).collect());
        assert!(!edge.is_low_quality());
        let slow = replay((0..10).map(|i| frame(i as f64 / 20.0)).collect());
        assert!(slow.is_low_quality());
    }

    #[test]
    fn correct_saber_is_sixth_context_value() {
        let e = NoteEvent {
            correct_saber: false,
            ..Default::default()
        };
        assert_eq!(e.context_values()[5], 0.0);
        let e = NoteEvent {
            correct_saber: true,
            ..Default::default()
        };
        assert_eq!(e.context_values()[5], 1.0);
    }
}

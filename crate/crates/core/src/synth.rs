//! Synthetic users and replays with known ground truth.
//!
//! Each user is a small set of physiology and style parameters. Replays play
//! the same fixed note map for everybody; the head follows the user's height
//! plus a small bob, and each hand sweeps a minimum-jerk arc through the cut
//! point of every note of its color. Three noise sources scale with
//! `noise_scale`: per-frame jitter, per-note variation and a constant offset
//! per session.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{self, mix_seed};
use crate::replay::{Color, Frame, Handedness, NoteEvent, Pose, Replay, ReplayMetadata, UserId};

/// Seconds between consecutive notes of the global map.
pub const NOTE_PERIOD: f64 = 0.8;
/// Time of the first note.
pub const FIRST_NOTE: f64 = 1.5;
/// Telemetry continues this long after the last note.
pub const TAIL: f64 = 1.5;
/// 2026-01-01T00:00:00Z.
const EPOCH: i64 = 1_767_225_600;

/// Closed interval sampled uniformly; `lo == hi` fixes the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn mid(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeightPrior {
    /// Weights for the bands `<1.5`, `1.5-1.6`, ..., `>=1.9` meters. Open
    /// bands are drawn from `[1.3, 1.5)` and `[1.9, 2.1)`.
    Bands([f64; 6]),
    Fixed(f64),
}

/// Band weights of the reference player population.
pub const HEIGHT_BAND_WEIGHTS: [f64; 6] = [8.8, 8.5, 31.1, 33.3, 12.1, 6.2];
const HEIGHT_BAND_EDGES: [f64; 7] = [1.3, 1.5, 1.6, 1.7, 1.8, 1.9, 2.1];

/// Distributions user profiles are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub height: HeightPrior,
    pub arm_length: Range,
    pub swing_amplitude: Range,
    pub tempo_bias: Range,
    pub lead_time: Range,
    pub jitter: Range,
    pub head_pitch: Range,
    pub head_forward: Range,
    pub head_bob: Range,
    pub hand_spread: Range,
    pub hand_rest_height: Range,
    pub grip_roll: Range,
    pub swing_rotation: Range,
    pub left_handed_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            height: HeightPrior::Bands(HEIGHT_BAND_WEIGHTS),
            arm_length: Range::new(0.55, 0.8),
            swing_amplitude: Range::new(0.3, 0.7),
            tempo_bias: Range::new(-0.05, 0.05),
            lead_time: Range::new(0.15, 0.3),
            jitter: Range::new(0.002, 0.01),
            head_pitch: Range::new(-0.25, 0.15),
            head_forward: Range::new(-0.1, 0.1),
            head_bob: Range::new(0.005, 0.03),
            hand_spread: Range::new(0.15, 0.35),
            hand_rest_height: Range::new(0.85, 1.15),
            grip_roll: Range::new(-0.5, 0.5),
            swing_rotation: Range::new(0.4, 1.2),
            left_handed_rate: 0.1,
        }
    }
}

impl Priors {
    /// Every style parameter fixed at its default midpoint; only height varies.
    pub fn height_only() -> Self {
        Priors::default().with_fixed_style()
    }

    /// Height fixed; style parameters vary.
    pub fn style_only(height: f64) -> Self {
        Priors {
            height: HeightPrior::Fixed(height),
            ..Priors::default()
        }
    }

    pub fn with_fixed_style(self) -> Self {
        let f = |r: Range| Range::fixed(r.mid());
        Priors {
            arm_length: f(self.arm_length),
            swing_amplitude: f(self.swing_amplitude),
            tempo_bias: f(self.tempo_bias),
            lead_time: f(self.lead_time),
            jitter: f(self.jitter),
            head_pitch: f(self.head_pitch),
            head_forward: f(self.head_forward),
            head_bob: f(self.head_bob),
            hand_spread: f(self.hand_spread),
            hand_rest_height: f(self.hand_rest_height),
            grip_roll: f(self.grip_roll),
            swing_rotation: f(self.swing_rotation),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.height {
            HeightPrior::Bands(w) => w.iter().all(|v| *v >= 0.0) && w.iter().sum::<f64>() > 0.0,
            HeightPrior::Fixed(h) => (1.2..=2.2).contains(h),
        };
        let ranges = [
            self.arm_length,
            self.swing_amplitude,
            self.tempo_bias,
            self.lead_time,
            self.jitter,
            self.head_pitch,
            self.head_forward,
            self.head_bob,
            self.hand_spread,
            self.hand_rest_height,
            self.grip_roll,
            self.swing_rotation,
        ];
        if !ok
            || ranges.iter().any(|r| !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite())
            || self.jitter.lo < 0.0
            || self.lead_time.lo < 0.05
            || self.lead_time.hi > 0.35
            || !(0.0..=1.0).contains(&self.left_handed_rate)
        {
            return Err(Error::InvalidConfig("invalid synthetic priors".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: UserId,
    /// Meters.
    pub height: f64,
    pub arm_length: f64,
    pub swing_amplitude: f64,
    /// Seconds the player cuts early (negative) or late.
    pub tempo_bias: f64,
    /// Seconds from swing start to the cut.
    pub lead_time: f64,
    /// Per-axis position jitter in meters, before noise scaling.
    pub jitter: [f64; 3],
    pub head_pitch: f64,
    pub head_forward: f64,
    pub head_bob: f64,
    pub hand_spread: f64,
    pub hand_rest_height: f64,
    pub grip_roll: f64,
    pub swing_rotation: f64,
    pub handedness: Handedness,
    pub headset: String,
    pub platform: String,
    pub country: String,
    pub seed: u64,
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[(&'a str, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|i| i.1).sum();
    let mut r = rng.random_range(0.0..total);
    for (name, w) in items {
        if r < *w {
            return name;
        }
        r -= w;
    }
    items[items.len() - 1].0
}

const HEADSETS: [(&str, f64); 5] = [
    ("Quest 2", 0.45),
    ("Quest 3", 0.2),
    ("Valve Index", 0.15),
    ("Rift S", 0.1),
    ("Vive", 0.1),
];
const PLATFORMS: [(&str, f64); 2] = [("steam", 0.6), ("oculus", 0.4)];
const COUNTRIES: [(&str, f64); 8] = [
    ("US", 0.35),
    ("DE", 0.1),
    ("GB", 0.1),
    ("FR", 0.08),
    ("JP", 0.07),
    ("CA", 0.1),
    ("BR", 0.1),
    ("PL", 0.1),
];

/// Draws user `index` of the cohort identified by `seed`.
pub fn generate_user(seed: u64, index: u64, priors: &Priors) -> Result<UserProfile> {
    priors.validate()?;
    let user_seed = mix_seed(seed, index, 0x05e7);
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed);
    let height = match &priors.height {
        HeightPrior::Fixed(h) => *h,
        HeightPrior::Bands(w) => {
            let total: f64 = w.iter().sum();
            let mut r = rng.random_range(0.0..total);
            let mut band = 5;
            for (i, wi) in w.iter().enumerate() {
                if r < *wi {
                    band = i;
                    break;
                }
                r -= wi;
            }
            rng.random_range(HEIGHT_BAND_EDGES[band]..HEIGHT_BAND_EDGES[band + 1])
        }
    };
    Ok(UserProfile {
        user_id: UserId(format!("user{index:05}")),
        height,
        arm_length: priors.arm_length.sample(&mut rng),
        swing_amplitude: priors.swing_amplitude.sample(&mut rng),
        tempo_bias: priors.tempo_bias.sample(&mut rng),
        lead_time: priors.lead_time.sample(&mut rng),
        jitter: [
            priors.jitter.sample(&mut rng),
            priors.jitter.sample(&mut rng),
            priors.jitter.sample(&mut rng),
        ],
        head_pitch: priors.head_pitch.sample(&mut rng),
        head_forward: priors.head_forward.sample(&mut rng),
        head_bob: priors.head_bob.sample(&mut rng),
        hand_spread: priors.hand_spread.sample(&mut rng),
        hand_rest_height: priors.hand_rest_height.sample(&mut rng),
        grip_roll: priors.grip_roll.sample(&mut rng),
        swing_rotation: priors.swing_rotation.sample(&mut rng),
        handedness: if rng.random_bool(priors.left_handed_rate) {
            Handedness::Left
        } else {
            Handedness::Right
        },
        headset: pick(&mut rng, &HEADSETS).to_string(),
        platform: pick(&mut rng, &PLATFORMS).to_string(),
        country: pick(&mut rng, &COUNTRIES).to_string(),
        seed: user_seed,
    })
}

/// Grid position, color and direction of note `k` of the global map.
pub fn note_layout(k: usize) -> (u8, u8, Color, u8) {
    let h = mix_seed(0x6e07e, k as u64, 0);
    let color = if (h >> 16) & 1 == 0 { Color::Left } else { Color::Right };
    ((h % 4) as u8, ((h >> 8) % 3) as u8, color, ((h >> 24) % 9) as u8)
}

fn direction(cut_direction: u8) -> [f64; 2] {
    const D: f64 = core::f64::consts::FRAC_1_SQRT_2;
    match cut_direction {
        0 => [0.0, 1.0],
        2 => [-1.0, 0.0],
        3 => [1.0, 0.0],
        4 => [-D, D],
        5 => [D, D],
        6 => [-D, -D],
        7 => [D, -D],
        _ => [0.0, -1.0],
    }
}

fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [ax, ay, az, aw] = a;
    let [bx, by, bz, bw] = b;
    [
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ]
}

/// Rotation by extrinsic angles about x, then y, then z, as `[i, j, k, w]`.
fn quat_xyz(rx: f64, ry: f64, rz: f64) -> [f64; 4] {
    let qx = [math::sin(rx / 2.0), 0.0, 0.0, math::cos(rx / 2.0)];
    let qy = [0.0, math::sin(ry / 2.0), 0.0, math::cos(ry / 2.0)];
    let qz = [0.0, 0.0, math::sin(rz / 2.0), math::cos(rz / 2.0)];
    quat_mul(qz, quat_mul(qy, qx))
}

/// f32-quantized pose with `w >= 0`.
fn pose(p: [f64; 3], q: [f64; 4]) -> Pose {
    let n = math::sqrt(q.iter().map(|v| v * v).sum());
    let s = if q[3] < 0.0 { -1.0 / n } else { 1.0 / n };
    let f = |v: f64| v as f32 as f64;
    Pose {
        pos_x: f(p[0]),
        pos_y: f(p[1]),
        pos_z: f(p[2]),
        rot_i: f(q[0] * s),
        rot_j: f(q[1] * s),
        rot_k: f(q[2] * s),
        rot_w: f(q[3] * s),
    }
}

struct Waypoint {
    time: f64,
    pos: [f64; 3],
}

fn interpolate(path: &[Waypoint], t: f64) -> [f64; 3] {
    let i = path.partition_point(|w| w.time <= t);
    if i == 0 {
        return path[0].pos;
    }
    if i == path.len() {
        return path[i - 1].pos;
    }
    let (a, b) = (&path[i - 1], &path[i]);
    let s = min_jerk((t - a.time) / (b.time - a.time));
    [0, 1, 2].map(|j| a.pos[j] + s * (b.pos[j] - a.pos[j]))
}

fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

/// Parameters of one generated replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySpec {
    pub session_index: u32,
    /// Position of the replay within its session.
    pub replay_index: u32,
    pub n_notes: usize,
    pub fps: f64,
    pub noise_scale: f64,
}

impl ReplaySpec {
    pub fn duration(&self) -> f64 {
        FIRST_NOTE + (self.n_notes.max(1) - 1) as f64 * NOTE_PERIOD + TAIL
    }
}

/// First replay of a session.
pub fn generate_replay(profile: &UserProfile, session_index: u32, n_notes: usize, fps: f64, noise_scale: f64) -> Result<Replay> {
    generate_session_replay(
        profile,
        &ReplaySpec {
            session_index,
            replay_index: 0,
            n_notes,
            fps,
            noise_scale,
        },
    )
}

/// Generates one replay. Sessions start a day apart; replays inside a
/// session follow each other with a 30 s pause.
pub fn generate_session_replay(profile: &UserProfile, spec: &ReplaySpec) -> Result<Replay> {
    if spec.n_notes == 0 || !(30.0..=144.0).contains(&spec.fps) || !(spec.noise_scale >= 0.0) {
        return Err(Error::InvalidConfig(
            "n_notes must be positive, fps in 30..=144 and noise_scale non-negative".to_string(),
        ));
    }
    let ns = spec.noise_scale;
    let p = profile;
    let mut session_rng = ChaCha8Rng::seed_from_u64(mix_seed(p.seed, spec.session_index as u64, 0x5e55));
    let head_offset = [0.0; 3].map(|_: f64| gauss(&mut session_rng, 0.02 * ns));
    let hand_offset = [0.0; 3].map(|_: f64| gauss(&mut session_rng, 0.02 * ns));
    let pitch_offset = gauss(&mut session_rng, 0.03 * ns);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
        p.seed,
        spec.session_index as u64,
        0x7e9 + spec.replay_index as u64,
    ));

    let rest = |side: f64| {
        [
            side * p.hand_spread + hand_offset[0],
            p.hand_rest_height + hand_offset[1],
            -0.25 + hand_offset[2],
        ]
    };
    let mut paths = [
        alloc::vec![Waypoint { time: 0.0, pos: rest(-1.0) }],
        alloc::vec![Waypoint { time: 0.0, pos: rest(1.0) }],
    ];
    let mut events = Vec::with_capacity(spec.n_notes);
    let reach = p.swing_amplitude * p.arm_length * 0.5;
    for k in 0..spec.n_notes {
        let (line_index, line_layer, color, cut_direction) = note_layout(k);
        let t = FIRST_NOTE + k as f64 * NOTE_PERIOD;
        let d = direction(cut_direction);
        let offset = [gauss(&mut rng, 0.03 * ns), gauss(&mut rng, 0.03 * ns), gauss(&mut rng, 0.02 * ns)];
        let center = [
            (line_index as f64 - 1.5) * 0.3,
            0.8 + line_layer as f64 * 0.3,
            -(0.3 + p.arm_length),
        ];
        let cut = [0, 1, 2].map(|j| center[j] + offset[j] + hand_offset[j]);
        let time_deviation = p.tempo_bias + gauss(&mut rng, 0.01 * ns);
        let lead = (p.lead_time + gauss(&mut rng, 0.02 * ns)).clamp(0.08, 0.38);
        let amp = reach * (1.0 + gauss(&mut rng, 0.05 * ns));
        let t_cut = t + time_deviation;
        let path = &mut paths[color as usize];
        let last = path.last().map_or(0.0, |w| w.time);
        let start = (t_cut - lead).max(last + 1e-3);
        path.push(Waypoint {
            time: start,
            pos: [cut[0] - amp * d[0], cut[1] - amp * d[1], cut[2]],
        });
        path.push(Waypoint {
            time: t_cut + (t_cut - start),
            pos: [cut[0] + amp * d[0], cut[1] + amp * d[1], cut[2]],
        });

        let dist = math::sqrt(offset[0] * offset[0] + offset[1] * offset[1]);
        let mut e = NoteEvent {
            event_time: t,
            line_index,
            line_layer,
            color,
            cut_direction,
            correct_saber: true,
            ..NoteEvent::default()
        };
        let f = |v: f64| v as f32 as f64;
        e.set_kinematics([
            f(p.grip_roll * 20.0 + gauss(&mut rng, 3.0 * ns)),
            f(1.875 * amp / (t_cut - start)),
            f(d[0]),
            f(d[1]),
            0.0,
            f(offset[0]),
            f(offset[1]),
            f(offset[2]),
            f(-d[1]),
            f(d[0]),
            0.0,
            f(dist),
            f(time_deviation),
            f((p.swing_rotation * 0.8 + gauss(&mut rng, 0.05 * ns)).clamp(0.0, 1.0)),
            f((amp / 0.25 + gauss(&mut rng, 0.05 * ns)).clamp(0.0, 1.0)),
            f(15.0 * (1.0 - (dist / 0.3).min(1.0))),
        ]);
        events.push(e);
    }
    let duration = spec.duration();
    for (side, path) in [-1.0, 1.0].into_iter().zip(paths.iter_mut()) {
        let last = path.last().map_or(0.0, |w| w.time);
        path.push(Waypoint {
            time: last.max(duration - TAIL / 2.0) + 0.5,
            pos: rest(side),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
        p.seed,
        spec.session_index as u64,
        0xf4a3_0000 + spec.replay_index as u64,
    ));
    let n_frames = (duration * spec.fps) as usize + 1;
    let tau = core::f64::consts::TAU;
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let t = i as f64 / spec.fps;
        let jitter = |rng: &mut ChaCha8Rng| [0, 1, 2].map(|j| gauss(rng, p.jitter[j] * ns));
        let j = jitter(&mut rng);
        let head_pos = [
            0.02 * math::sin(tau * t / 2.3) + head_offset[0] + j[0],
            p.height - 0.1 + p.head_bob * math::sin(tau * t / NOTE_PERIOD) + head_offset[1] + j[1],
            p.head_forward + 0.02 * math::sin(tau * t / 3.7) + head_offset[2] + j[2],
        ];
        let head_rot = quat_xyz(
            p.head_pitch + pitch_offset + 0.05 * math::sin(tau * t / 1.9) + gauss(&mut rng, 0.01 * ns),
            0.15 * math::sin(tau * t / 4.1) + gauss(&mut rng, 0.01 * ns),
            0.03 * math::sin(tau * t / 5.3),
        );
        let mut hands = [Pose::IDENTITY; 2];
        for (h, side) in [-1.0, 1.0].into_iter().enumerate() {
            let base = interpolate(&paths[h], t);
            let r = rest(side);
            let j = jitter(&mut rng);
            let pos = [base[0] + j[0], base[1] + j[1], base[2] + j[2]];
            let rot = quat_xyz(
                p.swing_rotation * (base[1] - r[1]) + gauss(&mut rng, 0.02 * ns),
                0.5 * p.swing_rotation * (base[0] - r[0]),
                side * p.grip_roll + gauss(&mut rng, 0.02 * ns),
            );
            hands[h] = pose(pos, rot);
        }
        frames.push(Frame {
            time: t,
            head: pose(head_pos, head_rot),
            left_hand: hands[0],
            right_hand: hands[1],
        });
    }

    let session_start = EPOCH + (mix_seed(p.seed, 0, 0) % 86_400) as i64 + spec.session_index as i64 * 86_400;
    let recorded_at = session_start + spec.replay_index as i64 * (duration as i64 + 30);
    let metadata = ReplayMetadata {
        user_id: p.user_id.clone(),
        platform: p.platform.clone(),
        runtime: if p.platform == "oculus" { "oculus" } else { "steamvr" }.to_string(),
        headset: p.headset.clone(),
        controller: format!("{} controller", p.headset),
        self_height: if mix_seed(p.seed, 1, 1).is_multiple_of(5) {
            f64::NAN
        } else {
            math::floor(p.height * 100.0 + 0.5) / 100.0
        },
        handedness: p.handedness,
        country: p.country.clone(),
        recorded_at,
        fps_nominal: spec.fps,
        extra: Default::default(),
    };
    Ok(Replay {
        metadata,
        frames,
        events,
    })
}

/// A reproducible synthetic cohort; users are generated on demand so large
/// cohorts never have to be held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub seed: u64,
    pub n_users: usize,
    pub priors: Priors,
    pub sessions_per_user: u32,
    pub replays_per_session: u32,
    pub notes_per_replay: usize,
    pub fps: f64,
    pub noise_scale: f64,
}

impl Default for Cohort {
    fn default() -> Self {
        Cohort {
            seed: 0,
            n_users: 50,
            priors: Priors::default(),
            sessions_per_user: 10,
            replays_per_session: 1,
            notes_per_replay: 60,
            fps: 60.0,
            noise_scale: 1.0,
        }
    }
}

impl Cohort {
    pub fn user(&self, index: usize) -> Result<UserProfile> {
        generate_user(self.seed, index as u64, &self.priors)
    }

    /// Every replay of one user, session by session.
    pub fn replays(&self, profile: &UserProfile) -> Result<Vec<Replay>> {
        let mut out = Vec::new();
        for s in 0..self.sessions_per_user {
            for r in 0..self.replays_per_session {
                out.push(generate_session_replay(
                    profile,
                    &ReplaySpec {
                        session_index: s,
                        replay_index: r,
                        n_notes: self.notes_per_replay,
                        fps: self.fps,
                        noise_scale: self.noise_scale,
                    },
                )?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Featurizer, Variant, WindowSpec};

    #[test]
    fn users_are_deterministic_and_in_range() {
        let p = Priors::default();
        assert_eq!(generate_user(3, 7, &p).unwrap(), generate_user(3, 7, &p).unwrap());
        assert_ne!(generate_user(3, 7, &p).unwrap(), generate_user(3, 8, &p).unwrap());
        for i in 0..200 {
            let u = generate_user(1, i, &p).unwrap();
            assert!((1.2..=2.2).contains(&u.height));
            assert!(u.jitter.iter().all(|j| *j >= 0.0));
        }
        let fixed = Priors {
            height: HeightPrior::Fixed(1.5),
            ..Priors::default()
        };
        assert!((0..50).all(|i| generate_user(2, i, &fixed).unwrap().height == 1.5));
    }

    #[test]
    fn height_band_frequency() {
        let p = Priors::default();
        let n = 10_000;
        let hits = (0..n)
            .filter(|&i| (1.6..1.7).contains(&generate_user(9, i, &p).unwrap().height))
            .count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.311).abs() < 0.02, "{frac}");
    }

    #[test]
    fn replays_are_valid() {
        let u = generate_user(0, 0, &Priors::default()).unwrap();
        for s in 0..3 {
            let r = generate_replay(&u, s, 20, 72.0, 1.0).unwrap();
            r.validate().unwrap();
            assert!(!r.is_low_quality());
            let mut c = r.clone();
            c.canonicalize().unwrap();
            assert_eq!(c.frames, r.frames);
        }
    }

    #[test]
    fn noise_free_sessions_match() {
        let u = generate_user(0, 1, &Priors::default()).unwrap();
        let a = generate_replay(&u, 0, 10, 60.0, 0.0).unwrap();
        let b = generate_replay(&u, 4, 10, 60.0, 0.0).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn sample_count_and_height_shift() {
        let f = Featurizer::new(WindowSpec::default()).unwrap();
        let u = generate_user(5, 2, &Priors::default()).unwrap();
        let r = generate_replay(&u, 0, 150, 60.0, 1.0).unwrap();
        assert_eq!(f.featurize_all(&[(0, &r)], Variant::Full232).len(), 150);

        let mut tall = u.clone();
        tall.height += 0.3;
        let rt = generate_replay(&tall, 0, 150, 60.0, 1.0).unwrap();
        let a = f.featurize(&r, &r.events[3], Variant::Quat105).unwrap();
        let b = f.featurize(&rt, &rt.events[3], Variant::Quat105).unwrap();
        let mean_y = crate::features::motion_index(0, 1, 2);
        assert!((b[mean_y] - a[mean_y] - 0.3).abs() < 1e-6);
    }
}

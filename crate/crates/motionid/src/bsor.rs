//! Import of BSOR ("Beat Saber Open Replay") files.
//!
//! Only the sections the pipeline needs are interpreted: the info block
//! (metadata), the frames and the note events. Walls, height changes and
//! pauses are read past; an unknown section id ends parsing. Notes that were
//! missed or were bombs carry no cut data and are dropped and counted.

use std::io::Read;

use byteorder::{LittleEndian as LE, ReadBytesExt};
use motionid_core::replay::{Color, Handedness};
use motionid_core::{Frame, NoteEvent, Pose, Replay, ReplayMetadata, UserId};

use crate::error::{eof_as_truncated, Error, Result};

pub const MAGIC: i32 = 0x442d_3d69;
pub const SUPPORTED_VERSION: u8 = 1;

const SECTION_INFO: u8 = 0;
const SECTION_FRAMES: u8 = 1;
const SECTION_NOTES: u8 = 2;
const SECTION_WALLS: u8 = 3;
const SECTION_HEIGHTS: u8 = 4;
const SECTION_PAUSES: u8 = 5;

const EVENT_GOOD: i32 = 0;
const EVENT_BAD: i32 = 1;

/// Radius (meters) at which the accuracy component of a cut reaches zero.
const ACCURACY_RADIUS: f64 = 0.3;
/// Maximum accuracy points for a centered cut.
const ACCURACY_POINTS: f64 = 15.0;

/// The info block fields the importer keeps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BsorInfo {
    pub mod_version: String,
    pub game_version: String,
    pub timestamp: String,
    pub player_id: String,
    pub player_name: String,
    pub platform: String,
    pub tracking_system: String,
    pub hmd: String,
    pub controller: String,
    pub song_hash: String,
    pub song_name: String,
    pub mapper: String,
    pub difficulty: String,
    pub score: i32,
    pub mode: String,
    pub environment: String,
    pub modifiers: String,
    pub jump_distance: f32,
    pub left_handed: bool,
    pub height: f32,
    pub start_time: f32,
    pub fail_time: f32,
    pub speed: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imported {
    pub replay: Replay,
    pub info: BsorInfo,
    /// Missed notes and bombs, which have no cut kinematics.
    pub dropped_events: usize,
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8> {
        self.inner.read_u8().map_err(eof_as_truncated)
    }
    fn bool(&mut self) -> Result<bool> {
        Ok(self.u8()? != 0)
    }
    fn i32(&mut self) -> Result<i32> {
        self.inner.read_i32::<LE>().map_err(eof_as_truncated)
    }
    fn i64(&mut self) -> Result<i64> {
        self.inner.read_i64::<LE>().map_err(eof_as_truncated)
    }
    fn f32(&mut self) -> Result<f32> {
        self.inner.read_f32::<LE>().map_err(eof_as_truncated)
    }
    fn vec3(&mut self) -> Result<[f64; 3]> {
        Ok([f64::from(self.f32()?), f64::from(self.f32()?), f64::from(self.f32()?)])
    }
    fn string(&mut self) -> Result<String> {
        let len = self.i32()?;
        let len = usize::try_from(len).map_err(|_| Error::Bsor(format!("negative string length {len}")))?;
        let mut bytes = Vec::with_capacity(len.min(1 << 16));
        (&mut self.inner).take(len as u64).read_to_end(&mut bytes)?;
        if bytes.len() != len {
            return Err(Error::Truncated);
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
    fn count(&mut self) -> Result<usize> {
        let n = self.i32()?;
        usize::try_from(n).map_err(|_| Error::Bsor(format!("negative count {n}")))
    }
    /// Next section id, or `None` at a clean end of stream.
    fn section(&mut self) -> Result<Option<u8>> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(None),
            _ => Ok(Some(b[0])),
        }
    }
    fn pose(&mut self) -> Result<Pose> {
        let p = self.vec3()?;
        let q = [self.f32()?, self.f32()?, self.f32()?, self.f32()?].map(f64::from);
        Ok(Pose::from_components([p[0], p[1], p[2], q[0], q[1], q[2], q[3]]))
    }
}

fn read_info<R: Read>(r: &mut Reader<R>) -> Result<BsorInfo> {
    Ok(BsorInfo {
        mod_version: r.string()?,
        game_version: r.string()?,
        timestamp: r.string()?,
        player_id: r.string()?,
        player_name: r.string()?,
        platform: r.string()?,
        tracking_system: r.string()?,
        hmd: r.string()?,
        controller: r.string()?,
        song_hash: r.string()?,
        song_name: r.string()?,
        mapper: r.string()?,
        difficulty: r.string()?,
        score: r.i32()?,
        mode: r.string()?,
        environment: r.string()?,
        modifiers: r.string()?,
        jump_distance: r.f32()?,
        left_handed: r.bool()?,
        height: r.f32()?,
        start_time: r.f32()?,
        fail_time: r.f32()?,
        speed: r.f32()?,
    })
}

fn read_note<R: Read>(r: &mut Reader<R>) -> Result<Option<NoteEvent>> {
    let note_id = r.i32()?;
    let event_time = f64::from(r.f32()?);
    let _spawn_time = r.f32()?;
    let event_type = r.i32()?;
    if event_type != EVENT_GOOD && event_type != EVENT_BAD {
        return Ok(None);
    }
    let _speed_ok = r.bool()?;
    let _direction_ok = r.bool()?;
    let saber_type_ok = r.bool()?;
    let _too_soon = r.bool()?;
    let saber_speed = f64::from(r.f32()?);
    let saber_dir = r.vec3()?;
    let _saber_type = r.i32()?;
    let time_deviation = f64::from(r.f32()?);
    let cut_dir_deviation = f64::from(r.f32()?);
    let cut_point = r.vec3()?;
    let cut_normal = r.vec3()?;
    let distance_to_center = f64::from(r.f32()?);
    let _cut_angle = r.f32()?;
    let before_cut_rating = f64::from(r.f32()?);
    let after_cut_rating = f64::from(r.f32()?);

    // Note ids pack the grid position as decimal digits:
    // line index, line layer, color, cut direction.
    let id = note_id.unsigned_abs();
    let color = Color::from_u8(((id / 10) % 10) as u8).unwrap_or(Color::Left);
    let event = NoteEvent {
        event_time,
        line_index: ((id / 1000) % 10).min(3) as u8,
        line_layer: ((id / 100) % 10).min(2) as u8,
        color,
        cut_direction: (id % 10).min(8) as u8,
        correct_saber: saber_type_ok,
        cut_angle_deviation: cut_dir_deviation,
        saber_speed,
        saber_dir,
        cut_point,
        cut_normal,
        distance_to_center,
        time_deviation,
        before_cut_rating,
        after_cut_rating,
        accuracy_score: ACCURACY_POINTS * (1.0 - (distance_to_center / ACCURACY_RADIUS).min(1.0)),
    };
    Ok(Some(event))
}

/// Parses a BSOR stream into the canonical replay model.
///
/// `recorded_at` falls back to 0 and the user id to the player name when the
/// corresponding info fields are empty or unparsable.
pub fn import_bsor<R: Read>(source: R) -> Result<Imported> {
    let mut r = Reader { inner: source };
    let magic = r.i32()?;
    if magic != MAGIC {
        return Err(Error::Bsor(format!("bad magic {magic:#x}")));
    }
    let version = r.u8()?;
    if version != SUPPORTED_VERSION {
        return Err(Error::UnsupportedBsorVersion(version));
    }

    let mut info = None;
    let mut frames = Vec::new();
    let mut events = Vec::new();
    let mut dropped = 0usize;
    while let Some(section) = r.section()? {
        match section {
            SECTION_INFO => info = Some(read_info(&mut r)?),
            SECTION_FRAMES => {
                let n = r.count()?;
                frames.reserve(n.min(1 << 16));
                for _ in 0..n {
                    let time = f64::from(r.f32()?);
                    let _fps = r.i32()?;
                    frames.push(Frame {
                        time,
                        head: r.pose()?,
                        left_hand: r.pose()?,
                        right_hand: r.pose()?,
                    });
                }
            }
            SECTION_NOTES => {
                let n = r.count()?;
                for _ in 0..n {
                    match read_note(&mut r)? {
                        Some(e) => events.push(e),
                        None => dropped += 1,
                    }
                }
            }
            SECTION_WALLS => {
                for _ in 0..r.count()? {
                    r.i32()?;
                    r.vec3()?;
                }
            }
            SECTION_HEIGHTS => {
                for _ in 0..r.count()? {
                    r.f32()?;
                    r.f32()?;
                }
            }
            SECTION_PAUSES => {
                for _ in 0..r.count()? {
                    r.i64()?;
                    r.f32()?;
                }
            }
            other => {
                log::warn!("bsor: unknown section {other}; ignoring the rest of the stream");
                break;
            }
        }
    }
    if dropped > 0 {
        log::warn!("bsor: dropped {dropped} notes without cut data");
    }
    let info = info.ok_or_else(|| Error::Bsor("missing info section".into()))?;

    // Frames occasionally repeat a timestamp; keep the first.
    frames.dedup_by(|b, a| b.time <= a.time);
    events.sort_by(|a, b| a.event_time.total_cmp(&b.event_time));
    if let (Some(first), Some(last)) = (frames.first(), frames.last()) {
        let (t0, t1) = (first.time, last.time);
        let before = events.len();
        events.retain(|e| e.event_time >= t0 && e.event_time <= t1);
        dropped += before - events.len();
    }

    let user = if info.player_id.is_empty() {
        info.player_name.clone()
    } else {
        info.player_id.clone()
    };
    let fps = if frames.len() >= 2 {
        let span = frames[frames.len() - 1].time - frames[0].time;
        if span > 0.0 {
            (frames.len() - 1) as f64 / span
        } else {
            0.0
        }
    } else {
        0.0
    };
    let metadata = ReplayMetadata {
        user_id: UserId(user),
        platform: info.platform.clone(),
        runtime: info.tracking_system.clone(),
        headset: info.hmd.clone(),
        controller: info.controller.clone(),
        self_height: if info.height > 0.0 {
            f64::from(info.height)
        } else {
            f64::NAN
        },
        handedness: if info.left_handed {
            Handedness::Left
        } else {
            Handedness::Right
        },
        country: String::new(),
        recorded_at: info.timestamp.trim().parse().unwrap_or(0),
        fps_nominal: fps,
        extra: [
            ("song_hash".to_string(), info.song_hash.clone()),
            ("difficulty".to_string(), info.difficulty.clone()),
            ("game_version".to_string(), info.game_version.clone()),
        ]
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .collect(),
    };
    let mut replay = Replay {
        metadata,
        frames,
        events,
    };
    replay.canonicalize()?;
    replay.validate()?;
    Ok(Imported {
        replay,
        info,
        dropped_events: dropped,
    })
}

//! MIDR1: the bit-exact replay container.
//!
//! Little-endian throughout:
//!
//! | field            | encoding                                                      |
//! |------------------|---------------------------------------------------------------|
//! | magic            | `b"MIDR1"`                                                    |
//! | version          | u16 (currently 1)                                             |
//! | metadata         | u32 pair count, then per pair u32 length + UTF-8 key, same for value |
//! | frames           | u64 count, then per frame f64 time and 21 f32 (head, left hand, right hand; x, y, z, i, j, k, w) |
//! | events           | u64 count, then per event f64 time, 5 u8 (line index, line layer, color, cut direction, correct saber) and the 16 f32 cut kinematics |
//!
//! Pose and kinematic values are stored as `f32`, so a replay whose values
//! are all `f32`-representable round-trips exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use motionid_core::replay::{Color, Handedness};
use motionid_core::{Frame, NoteEvent, Pose, Replay, ReplayMetadata, UserId};

use crate::error::{eof_as_truncated, Error, Result};

pub const MAGIC: &[u8; 5] = b"MIDR1";
pub const VERSION: u16 = 1;
/// Conventional file extension.
pub const EXTENSION: &str = "midr";

const RESERVED_KEYS: [&str; 10] = [
    "user_id",
    "platform",
    "runtime",
    "headset",
    "controller",
    "self_height",
    "handedness",
    "country",
    "recorded_at",
    "fps_nominal",
];

/// Upper bound on preallocation from untrusted counts.
const MAX_PREALLOC: usize = 1 << 16;

fn metadata_pairs(m: &ReplayMetadata) -> Result<Vec<(String, String)>> {
    if let Some(k) = m.extra.keys().find(|k| RESERVED_KEYS.contains(&k.as_str())) {
        return Err(Error::Malformed(format!("extra metadata key {k:?} is reserved")));
    }
    let mut v = vec![
        ("user_id".to_string(), m.user_id.0.clone()),
        ("platform".to_string(), m.platform.clone()),
        ("runtime".to_string(), m.runtime.clone()),
        ("headset".to_string(), m.headset.clone()),
        ("controller".to_string(), m.controller.clone()),
        ("self_height".to_string(), format!("{:e}", m.self_height)),
        ("handedness".to_string(), m.handedness.as_str().to_string()),
        ("country".to_string(), m.country.clone()),
        ("recorded_at".to_string(), m.recorded_at.to_string()),
        ("fps_nominal".to_string(), format!("{:e}", m.fps_nominal)),
    ];
    v.extend(m.extra.iter().map(|(k, v)| (k.clone(), v.clone())));
    Ok(v)
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| Error::Malformed("string longer than 4 GiB".into()))?;
    w.write_u32::<LE>(len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_pose<W: Write>(w: &mut W, p: &Pose) -> Result<()> {
    for c in p.components() {
        w.write_f32::<LE>(c as f32)?;
    }
    Ok(())
}

/// Serializes a replay. The replay is validated first; nothing is written if
/// it violates an invariant. Returns the number of bytes written.
pub fn write_container<W: Write>(replay: &Replay, sink: &mut W) -> Result<u64> {
    replay.validate()?;
    let pairs = metadata_pairs(&replay.metadata)?;
    let mut buf: Vec<u8> = Vec::with_capacity(64 + replay.frames.len() * 92 + replay.events.len() * 77);
    buf.write_all(MAGIC)?;
    buf.write_u16::<LE>(VERSION)?;
    buf.write_u32::<LE>(pairs.len() as u32)?;
    for (k, v) in &pairs {
        put_str(&mut buf, k)?;
        put_str(&mut buf, v)?;
    }
    buf.write_u64::<LE>(replay.frames.len() as u64)?;
    for f in &replay.frames {
        buf.write_f64::<LE>(f.time)?;
        for p in f.poses() {
            put_pose(&mut buf, p)?;
        }
    }
    buf.write_u64::<LE>(replay.events.len() as u64)?;
    for e in &replay.events {
        buf.write_f64::<LE>(e.event_time)?;
        buf.write_all(&[
            e.line_index,
            e.line_layer,
            e.color as u8,
            e.cut_direction,
            u8::from(e.correct_saber),
        ])?;
        for k in e.kinematics() {
            buf.write_f32::<LE>(k as f32)?;
        }
    }
    sink.write_all(&buf)?;
    Ok(buf.len() as u64)
}

/// Convenience wrapper returning the container bytes.
pub fn to_bytes(replay: &Replay) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_container(replay, &mut out)?;
    Ok(out)
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LE>().map_err(eof_as_truncated)? as usize;
    let mut bytes = Vec::with_capacity(len.min(MAX_PREALLOC));
    r.take(len as u64).read_to_end(&mut bytes)?;
    if bytes.len() != len {
        return Err(Error::Truncated);
    }
    String::from_utf8(bytes).map_err(|_| Error::Malformed("metadata is not UTF-8".into()))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Malformed(format!("metadata {key}: not a number: {v:?}")))
}

fn metadata_from_pairs(pairs: Vec<(String, String)>) -> Result<ReplayMetadata> {
    let mut m = ReplayMetadata {
        self_height: f64::NAN,
        ..ReplayMetadata::default()
    };
    let mut extra = BTreeMap::new();
    for (k, v) in pairs {
        match k.as_str() {
            "user_id" => m.user_id = UserId(v),
            "platform" => m.platform = v,
            "runtime" => m.runtime = v,
            "headset" => m.headset = v,
            "controller" => m.controller = v,
            "self_height" => m.self_height = parse_f64(&k, &v)?,
            "handedness" => {
                m.handedness = match v.as_str() {
                    "left" => Handedness::Left,
                    "right" => Handedness::Right,
                    _ => return Err(Error::Malformed(format!("handedness {v:?}"))),
                }
            }
            "country" => m.country = v,
            "recorded_at" => {
                m.recorded_at = v
                    .parse()
                    .map_err(|_| Error::Malformed(format!("recorded_at {v:?}")))?
            }
            "fps_nominal" => m.fps_nominal = parse_f64(&k, &v)?,
            _ => {
                extra.insert(k, v);
            }
        }
    }
    m.extra = extra;
    Ok(m)
}

fn get_pose<R: Read>(r: &mut R, frame: usize) -> Result<Pose> {
    let mut c = [0.0f64; 7];
    for v in &mut c {
        *v = f64::from(r.read_f32::<LE>().map_err(eof_as_truncated)?);
    }
    if c.iter().any(|v| v.is_nan()) {
        return Err(Error::NanPose { frame });
    }
    Ok(Pose::from_components(c))
}

/// Parses a container. Quaternions are normalized and sign-canonicalized,
/// and the result is validated.
pub fn read_container<R: Read>(source: &mut R) -> Result<Replay> {
    let mut magic = [0u8; 5];
    let mut got = 0;
    while got < magic.len() {
        match source.read(&mut magic[got..])? {
            0 => break,
            n => got += n,
        }
    }
    if got < magic.len() && magic[..got] == MAGIC[..got] {
        return Err(Error::Truncated);
    }
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic[..got].to_vec()));
    }
    let version = source.read_u16::<LE>().map_err(eof_as_truncated)?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let n_pairs = source.read_u32::<LE>().map_err(eof_as_truncated)? as usize;
    let mut pairs = Vec::with_capacity(n_pairs.min(MAX_PREALLOC));
    for _ in 0..n_pairs {
        let k = get_str(source)?;
        let v = get_str(source)?;
        pairs.push((k, v));
    }
    let metadata = metadata_from_pairs(pairs)?;

    let n_frames = source.read_u64::<LE>().map_err(eof_as_truncated)? as usize;
    let mut frames = Vec::with_capacity(n_frames.min(MAX_PREALLOC));
    for i in 0..n_frames {
        let time = source.read_f64::<LE>().map_err(eof_as_truncated)?;
        frames.push(Frame {
            time,
            head: get_pose(source, i)?,
            left_hand: get_pose(source, i)?,
            right_hand: get_pose(source, i)?,
        });
    }

    let n_events = source.read_u64::<LE>().map_err(eof_as_truncated)? as usize;
    let mut events = Vec::with_capacity(n_events.min(MAX_PREALLOC));
    for _ in 0..n_events {
        let event_time = source.read_f64::<LE>().map_err(eof_as_truncated)?;
        let mut b = [0u8; 5];
        source.read_exact(&mut b).map_err(eof_as_truncated)?;
        let color = Color::from_u8(b[2]).ok_or_else(|| Error::Malformed(format!("color {}", b[2])))?;
        if b[4] > 1 {
            return Err(Error::Malformed(format!("correct_saber {}", b[4])));
        }
        let mut k = [0.0f64; 16];
        for v in &mut k {
            *v = f64::from(source.read_f32::<LE>().map_err(eof_as_truncated)?);
        }
        let mut e = NoteEvent {
            event_time,
            line_index: b[0],
            line_layer: b[1],
            color,
            cut_direction: b[3],
            correct_saber: b[4] == 1,
            ..NoteEvent::default()
        };
        e.set_kinematics(k);
        events.push(e);
    }

    let mut replay = Replay {
        metadata,
        frames,
        events,
    };
    replay.canonicalize()?;
    replay.validate()?;
    Ok(replay)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Replay> {
    read_container(&mut &bytes[..])
}

pub fn read_file(path: &std::path::Path) -> Result<Replay> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_file(path: &std::path::Path, replay: &Replay) -> Result<u64> {
    let bytes = to_bytes(replay)?;
    std::fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// Field-by-field equality comparing floats by bit pattern (all NaNs equal).
pub fn bit_identical(a: &Replay, b: &Replay) -> bool {
    fn f(x: f64, y: f64) -> bool {
        x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())
    }
    let ma = &a.metadata;
    let mb = &b.metadata;
    let meta = ma.user_id == mb.user_id
        && ma.platform == mb.platform
        && ma.runtime == mb.runtime
        && ma.headset == mb.headset
        && ma.controller == mb.controller
        && f(ma.self_height, mb.self_height)
        && ma.handedness == mb.handedness
        && ma.country == mb.country
        && ma.recorded_at == mb.recorded_at
        && f(ma.fps_nominal, mb.fps_nominal)
        && ma.extra == mb.extra;
    let frames = a.frames.len() == b.frames.len()
        && a.frames.iter().zip(&b.frames).all(|(x, y)| {
            f(x.time, y.time)
                && x.poses().iter().zip(y.poses()).all(|(p, q)| {
                    p.components().iter().zip(q.components()).all(|(u, v)| f(*u, v))
                })
        });
    let events = a.events.len() == b.events.len()
        && a.events.iter().zip(&b.events).all(|(x, y)| {
            f(x.event_time, y.event_time)
                && x.line_index == y.line_index
                && x.line_layer == y.line_layer
                && x.color == y.color
                && x.cut_direction == y.cut_direction
                && x.correct_saber == y.correct_saber
                && x.kinematics().iter().zip(y.kinematics()).all(|(u, v)| f(*u, v))
        });
    meta && frames && events
}

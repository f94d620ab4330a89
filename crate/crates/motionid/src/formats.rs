//! Text formats for features, scalers, split assignments and boosted models.
//!
//! Floats are written in Rust's shortest round-trip exponent notation, so
//! every reader reproduces the written values bit for bit.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use motionid_core::features::{FeatureVector, Variant};
use motionid_core::gbdt::{GbdtConfig, Node, Tree, TreeModel};
use motionid_core::session::{Split, SplitAssignment};
use motionid_core::{Scaler, UserId};

use crate::error::{Error, Result};

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn parse_num(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("not a number: {s:?}")))
}

fn parse_int<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("not an integer: {s:?}")))
}

// Feature matrices.

/// Writes feature vectors as CSV. The first record is `variant,dim,count`,
/// the second the column names, then one row per sample:
/// `user_id,session_id,event_time,f0,...`.
pub fn write_features<W: Write>(sink: W, variant: Variant, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(sink);
    w.write_record([variant.name(), &variant.dim().to_string(), &rows.len().to_string()])?;
    let mut header = vec!["user_id".to_string(), "session_id".to_string(), "event_time".to_string()];
    header.extend((0..variant.dim()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(variant.dim() + 3);
    for r in rows {
        if r.values.len() != variant.dim() || r.variant != variant {
            return Err(motionid_core::Error::DimensionMismatch {
                expected: variant.dim(),
                found: r.values.len(),
            }
            .into());
        }
        rec.clear();
        rec.push(r.user_id.0.clone());
        rec.push(r.session_id.to_string());
        rec.push(num(r.event_time));
        rec.extend(r.values.iter().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<(Variant, Vec<FeatureVector>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = r.records();
    let head = records
        .next()
        .ok_or_else(|| Error::parse(path, "empty feature file"))??;
    let variant = Variant::parse(head.get(0).unwrap_or(""))
        .ok_or_else(|| Error::parse(path, format!("unknown variant {:?}", head.get(0))))?;
    let dim: usize = parse_int(path, head.get(1).unwrap_or(""))?;
    let count: usize = parse_int(path, head.get(2).unwrap_or(""))?;
    if dim != variant.dim() {
        return Err(Error::parse(path, format!("dimension {dim} does not match {variant}")));
    }
    records
        .next()
        .ok_or_else(|| Error::parse(path, "missing column header"))??;
    let mut out = Vec::with_capacity(count);
    for rec in records {
        let rec = rec?;
        if rec.len() != dim + 3 {
            return Err(Error::parse(path, format!("row has {} fields, expected {}", rec.len(), dim + 3)));
        }
        let values = rec
            .iter()
            .skip(3)
            .map(|v| parse_num(path, v))
            .collect::<Result<Vec<f64>>>()?;
        out.push(FeatureVector {
            user_id: UserId(rec[0].to_string()),
            session_id: parse_int(path, &rec[1])?,
            event_time: parse_num(path, &rec[2])?,
            variant,
            values,
        });
    }
    if out.len() != count {
        return Err(Error::parse(path, format!("expected {count} rows, found {}", out.len())));
    }
    Ok((variant, out))
}

// Scaler.

pub fn write_scaler<W: Write>(mut sink: W, s: &Scaler) -> Result<()> {
    let mut out = format!("SCALER1,{}\n", s.dim());
    for (i, (m, sc)) in s.means.iter().zip(&s.scales).enumerate() {
        let _ = writeln!(out, "{i},{},{}", num(*m), num(*sc));
    }
    sink.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_scaler(path: &Path) -> Result<Scaler> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let head = lines.next().unwrap_or("");
    let dim: usize = match head.split_once(',') {
        Some(("SCALER1", d)) => parse_int(path, d)?,
        _ => return Err(Error::parse(path, "missing SCALER1 header")),
    };
    let mut means = Vec::with_capacity(dim);
    let mut scales = Vec::with_capacity(dim);
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 || parse_int::<usize>(path, f[0])? != i {
            return Err(Error::parse(path, format!("bad scaler line {line:?}")));
        }
        means.push(parse_num(path, f[1])?);
        let sc = parse_num(path, f[2])?;
        if !(sc > 0.0) {
            return Err(Error::parse(path, format!("non-positive scale at index {i}")));
        }
        scales.push(sc);
    }
    if means.len() != dim {
        return Err(Error::parse(path, format!("expected {dim} entries, found {}", means.len())));
    }
    Ok(Scaler { means, scales })
}

// Split assignments.

/// One line per session: `user_id,session_id,split,start,end,replay_ids`
/// with replay ids separated by `;`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub user_id: UserId,
    pub session_id: u32,
    pub split: Split,
    pub start: f64,
    pub end: f64,
    pub replay_ids: Vec<String>,
}

pub fn write_splits<W: Write>(sink: W, rows: &[SplitRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["user_id", "session_id", "split", "start", "end", "replay_ids"])?;
    for r in rows {
        w.write_record([
            r.user_id.0.as_str(),
            &r.session_id.to_string(),
            r.split.as_str(),
            &num(r.start),
            &num(r.end),
            &r.replay_ids.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<Vec<SplitRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(Error::parse(path, "split rows need 6 fields"));
        }
        out.push(SplitRow {
            user_id: UserId(rec[0].to_string()),
            session_id: parse_int(path, &rec[1])?,
            split: Split::parse(&rec[2]).ok_or_else(|| Error::parse(path, format!("unknown split {:?}", &rec[2])))?,
            start: parse_num(path, &rec[3])?,
            end: parse_num(path, &rec[4])?,
            replay_ids: rec[5].split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(out)
}

/// Rebuilds per-user assignments from split rows.
pub fn assignments(rows: &[SplitRow]) -> std::collections::BTreeMap<UserId, SplitAssignment> {
    let mut out: std::collections::BTreeMap<UserId, SplitAssignment> = Default::default();
    for r in rows {
        let a = out.entry(r.user_id.clone()).or_insert_with(|| SplitAssignment {
            user_id: r.user_id.clone(),
            ..Default::default()
        });
        let set: &mut BTreeSet<u32> = match r.split {
            Split::Train => &mut a.train,
            Split::Cluster => &mut a.cluster,
            Split::Validate => &mut a.validate,
            Split::Test => &mut a.test,
        };
        set.insert(r.session_id);
    }
    out
}

// GBDT1 model files.

pub const GBDT_MAGIC: &str = "GBDT1";

fn config_line(c: &GbdtConfig) -> String {
    format!(
        "config learning_rate={} n_estimators={} num_leaves={} max_bin={} min_data_in_leaf={} \
         min_child_weight={} min_split_gain={} reg_alpha={} reg_lambda={} colsample_bytree={} \
         max_depth={} goss_enabled={} goss_top_rate={} goss_other_rate={} seed={}",
        num(c.learning_rate),
        c.n_estimators,
        c.num_leaves,
        c.max_bin,
        c.min_data_in_leaf,
        num(c.min_child_weight),
        num(c.min_split_gain),
        num(c.reg_alpha),
        num(c.reg_lambda),
        num(c.colsample_bytree),
        c.max_depth.map_or("none".to_string(), |d| d.to_string()),
        c.goss_enabled,
        num(c.goss_top_rate),
        num(c.goss_other_rate),
        c.seed,
    )
}

fn parse_config(path: &Path, line: &str) -> Result<GbdtConfig> {
    let mut c = GbdtConfig::default();
    let mut fields = line.split_whitespace();
    if fields.next() != Some("config") {
        return Err(Error::parse(path, "missing config line"));
    }
    for kv in fields {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::parse(path, format!("bad config entry {kv:?}")))?;
        match k {
            "learning_rate" => c.learning_rate = parse_num(path, v)?,
            "n_estimators" => c.n_estimators = parse_int(path, v)?,
            "num_leaves" => c.num_leaves = parse_int(path, v)?,
            "max_bin" => c.max_bin = parse_int(path, v)?,
            "min_data_in_leaf" => c.min_data_in_leaf = parse_int(path, v)?,
            "min_child_weight" => c.min_child_weight = parse_num(path, v)?,
            "min_split_gain" => c.min_split_gain = parse_num(path, v)?,
            "reg_alpha" => c.reg_alpha = parse_num(path, v)?,
            "reg_lambda" => c.reg_lambda = parse_num(path, v)?,
            "colsample_bytree" => c.colsample_bytree = parse_num(path, v)?,
            "max_depth" => c.max_depth = if v == "none" { None } else { Some(parse_int(path, v)?) },
            "goss_enabled" => c.goss_enabled = v == "true",
            "goss_top_rate" => c.goss_top_rate = parse_num(path, v)?,
            "goss_other_rate" => c.goss_other_rate = parse_num(path, v)?,
            "seed" => c.seed = parse_int(path, v)?,
            _ => return Err(Error::parse(path, format!("unknown config key {k:?}"))),
        }
    }
    Ok(c)
}

/// Serializes a boosted model:
///
/// ```text
/// GBDT1
/// config key=value ...
/// shape <n_features> <n_classes> <constant class or "none">
/// edges <feature> <count> <edge>...        (one line per feature)
/// class <c> <n_trees>
/// tree <n_nodes>
/// S <feature> <bin> <threshold> <gain> <left> <right>
/// L <value>
/// ```
///
/// Trees are stored in preorder.
pub fn write_gbdt<W: Write>(mut sink: W, m: &TreeModel) -> Result<()> {
    let mut out = String::new();
    out.push_str(GBDT_MAGIC);
    out.push('\n');
    out.push_str(&config_line(&m.config));
    out.push('\n');
    let _ = writeln!(
        out,
        "shape {} {} {}",
        m.n_features,
        m.n_classes,
        m.constant_class.map_or("none".to_string(), |c| c.to_string())
    );
    for (j, e) in m.bin_edges.iter().enumerate() {
        let _ = write!(out, "edges {j} {}", e.len());
        for v in e {
            let _ = write!(out, " {}", num(*v));
        }
        out.push('\n');
    }
    for (c, trees) in m.trees.iter().enumerate() {
        let _ = writeln!(out, "class {c} {}", trees.len());
        for t in trees {
            let _ = writeln!(out, "tree {}", t.nodes.len());
            for n in &t.nodes {
                match n {
                    Node::Split {
                        feature,
                        bin,
                        threshold,
                        gain,
                        left,
                        right,
                    } => {
                        let _ = writeln!(out, "S {feature} {bin} {} {} {left} {right}", num(*threshold), num(*gain));
                    }
                    Node::Leaf { value } => {
                        let _ = writeln!(out, "L {}", num(*value));
                    }
                }
            }
        }
    }
    sink.write_all(out.as_bytes())?;
    Ok(())
}

pub fn gbdt_bytes(m: &TreeModel) -> Vec<u8> {
    let mut v = Vec::new();
    write_gbdt(&mut v, m).expect("writing to memory cannot fail");
    v
}

pub fn read_gbdt<R: BufRead>(path: &Path, source: R) -> Result<TreeModel> {
    let mut lines = source.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, "unexpected end of model file"))?
            .map_err(Error::from)
    };
    if next()? != GBDT_MAGIC {
        return Err(Error::parse(path, "missing GBDT1 header"));
    }
    let config = parse_config(path, &next()?)?;
    let shape = next()?;
    let f: Vec<&str> = shape.split_whitespace().collect();
    if f.len() != 4 || f[0] != "shape" {
        return Err(Error::parse(path, "bad shape line"));
    }
    let n_features: usize = parse_int(path, f[1])?;
    let n_classes: usize = parse_int(path, f[2])?;
    let constant_class = if f[3] == "none" { None } else { Some(parse_int(path, f[3])?) };
    let mut bin_edges = Vec::new();
    let mut trees = Vec::with_capacity(n_classes);
    let mut line = next();
    while let Ok(l) = &line {
        if !l.starts_with("edges ") {
            break;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        let count: usize = parse_int(path, f.get(2).copied().unwrap_or(""))?;
        if f.len() != count + 3 || parse_int::<usize>(path, f[1])? != bin_edges.len() {
            return Err(Error::parse(path, "bad edges line"));
        }
        bin_edges.push(f[3..].iter().map(|v| parse_num(path, v)).collect::<Result<Vec<_>>>()?);
        line = next();
    }
    for c in 0..n_classes {
        let l = std::mem::replace(&mut line, Err(Error::parse(path, "")))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 || f[0] != "class" || parse_int::<usize>(path, f[1])? != c {
            return Err(Error::parse(path, format!("expected class {c}")));
        }
        let n_trees: usize = parse_int(path, f[2])?;
        let mut class_trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let l = next()?;
            let n_nodes: usize = match l.split_once(' ') {
                Some(("tree", n)) => parse_int(path, n)?,
                _ => return Err(Error::parse(path, "expected tree")),
            };
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let l = next()?;
                let f: Vec<&str> = l.split_whitespace().collect();
                let node = match (f.first(), f.len()) {
                    (Some(&"S"), 7) => Node::Split {
                        feature: parse_int(path, f[1])?,
                        bin: parse_int(path, f[2])?,
                        threshold: parse_num(path, f[3])?,
                        gain: parse_num(path, f[4])?,
                        left: parse_int(path, f[5])?,
                        right: parse_int(path, f[6])?,
                    },
                    (Some(&"L"), 2) => Node::Leaf {
                        value: parse_num(path, f[1])?,
                    },
                    _ => return Err(Error::parse(path, format!("bad node line {l:?}"))),
                };
                if let Node::Split { feature, left, right, .. } = node {
                    let here = nodes.len();
                    let preorder = left as usize == here + 1 && right as usize > here + 1;
                    if feature as usize >= n_features || right as usize >= n_nodes || !preorder {
                        return Err(Error::parse(path, "node references are not in preorder"));
                    }
                }
                nodes.push(node);
            }
            class_trees.push(Tree { nodes });
        }
        trees.push(class_trees);
        if c + 1 < n_classes {
            line = next();
        }
    }
    if bin_edges.len() != n_features && constant_class.is_none() {
        return Err(Error::parse(path, "edge count does not match feature count"));
    }
    Ok(TreeModel {
        config,
        n_features,
        n_classes,
        bin_edges,
        trees,
        constant_class,
    })
}

//! Pipeline stages: in-memory building blocks plus the workspace-backed
//! stages the command line runs.
//!
//! Workspace layout:
//!
//! ```text
//! replays/<user>/<replay>.midr    imported or generated replays
//! truth.json                      synthetic ground truth (synth only)
//! splits.csv                      session split assignment
//! users.csv                       per-user attributes for impact factors
//! features/<split>.csv            unscaled feature vectors
//! features/added.csv              training rows of users added later
//! scaler.txt                      z-score scaler fitted on the train split
//! model/                          trained hierarchy (see `modeldir`)
//! report.txt, per_user.csv        evaluation output
//! <stage>.manifest.json           config echo, seeds and input digests
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use motionid_core::eval::{self, EvalOptions, EvalReport, UserAttributes};
use motionid_core::features::{feature_types, FeatureType, FeatureVector, Featurizer, Variant, WindowSpec, HEAD_HEIGHT_PROXY};
use motionid_core::gbdt::{GbdtConfig, GbdtTrainer};
use motionid_core::hierarchy::{train_hierarchy, HierarchyConfig, Mode};
use motionid_core::session::{assign_splits, sessionize, ReplayStamp, Session, Split, SplitAssignment, SplitRatios};
use motionid_core::synth::{Cohort, Priors, UserProfile};
use motionid_core::{mix_seed, Dataset, Matrix, Replay, Scaler, UserId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{self, SplitRow};
use crate::modeldir::{self, sha256_hex, Model};
use crate::{midr, report};

// In-memory stages.

/// How samples are drawn from a user's sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeConfig {
    pub variant: String,
    pub pre_span: f64,
    pub post_span: f64,
    pub min_frames: usize,
    /// Train, cluster, validate, test.
    pub ratios: [f64; 4],
    /// Samples per user from the training sessions.
    pub train_samples: usize,
    /// Samples per user from each of the other splits.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        FeaturizeConfig {
            variant: Variant::Full232.name().to_string(),
            pre_span: 1.0,
            post_span: 1.0,
            min_frames: 10,
            ratios: [r.train, r.cluster, r.validate, r.test],
            train_samples: 150,
            eval_samples: 50,
            seed: 0,
        }
    }
}

impl FeaturizeConfig {
    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.variant)
            .ok_or_else(|| Error::Workspace(format!("unknown variant {:?}", self.variant)))
    }

    pub fn ratios(&self) -> SplitRatios {
        let [train, cluster, validate, test] = self.ratios;
        SplitRatios {
            train,
            cluster,
            validate,
            test,
        }
    }

    pub fn featurizer(&self) -> Result<Featurizer> {
        Ok(Featurizer::new(WindowSpec {
            pre_span: self.pre_span,
            post_span: self.post_span,
            min_frames: self.min_frames,
        })?)
    }
}

/// Everything the pipeline derives from one user's replays.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub user: UserId,
    pub sessions: Vec<Session>,
    pub assignment: SplitAssignment,
    /// Samples per split, indexed like [`Split::ALL`].
    pub samples: [Vec<FeatureVector>; 4],
    pub attributes: UserAttributes,
}

impl UserFeatures {
    pub fn split(&self, s: Split) -> &[FeatureVector] {
        &self.samples[Split::ALL.iter().position(|x| *x == s).expect("split")]
    }
}

pub fn attributes_of(replays: &[&Replay]) -> UserAttributes {
    let first = replays.first().map(|r| &r.metadata);
    UserAttributes {
        headset: first.map(|m| m.headset.clone()).unwrap_or_default(),
        platform: first.map(|m| m.platform.clone()).unwrap_or_default(),
        country: first.map(|m| m.country.clone()).unwrap_or_default(),
        replay_count: Some(replays.len()),
        self_height: first.map_or(f64::NAN, |m| m.self_height),
        handedness: first.map(|m| m.handedness),
    }
}

/// Sessionizes, splits and samples one user's replays. `replays` pairs a
/// replay id with each replay; all must belong to the same user.
pub fn featurize_user(replays: &[(String, &Replay)], cfg: &FeaturizeConfig) -> Result<UserFeatures> {
    let variant = cfg.variant()?;
    let featurizer = cfg.featurizer()?;
    let stamps: Vec<ReplayStamp> = replays.iter().map(|(id, r)| ReplayStamp::of(id.clone(), r)).collect();
    let sessions = sessionize(&stamps)?;
    let user = sessions[0].user_id.clone();
    let assignment = assign_splits(&sessions, cfg.ratios(), cfg.seed)?;
    let mut session_of: BTreeMap<&str, u32> = BTreeMap::new();
    for s in &sessions {
        for r in &s.replay_ids {
            session_of.insert(r.as_str(), s.id);
        }
    }
    let tagged: Vec<(u32, &Replay)> = replays.iter().map(|(id, r)| (session_of[id.as_str()], *r)).collect();
    let mut samples: [Vec<FeatureVector>; 4] = Default::default();
    for (i, split) in Split::ALL.into_iter().enumerate() {
        let set = assignment.set(split);
        if set.is_empty() {
            continue;
        }
        let n = if split == Split::Train { cfg.train_samples } else { cfg.eval_samples };
        match featurizer.sample_events(&tagged, set, variant, n, mix_seed(cfg.seed, i as u64, 0x5a3)) {
            Ok(v) => samples[i] = v,
            Err(motionid_core::Error::NoSamples(_)) => {
                log::warn!("user {user}: no usable samples in the {} split", split.as_str());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let refs: Vec<&Replay> = replays.iter().map(|(_, r)| *r).collect();
    Ok(UserFeatures {
        user,
        sessions,
        assignment,
        samples,
        attributes: attributes_of(&refs),
    })
}

/// Stacks feature vectors into a dataset over `users` (any order, no
/// duplicates), optionally scaling each row. Rows of other users are an
/// error.
pub fn build_dataset(users: &[UserId], rows: &[FeatureVector], dim: usize, scaler: Option<&Scaler>) -> Result<Dataset> {
    let index: BTreeMap<&UserId, usize> = users.iter().enumerate().map(|(i, u)| (u, i)).collect();
    let mut d = Dataset::empty(users.to_vec(), dim);
    let mut buf = vec![0.0; dim];
    for r in rows {
        let label = *index
            .get(&r.user_id)
            .ok_or_else(|| motionid_core::Error::UnknownUser(r.user_id.to_string()))?;
        buf.copy_from_slice(&r.values);
        if let Some(s) = scaler {
            s.transform_row(&mut buf)?;
        }
        d.push(label, r.session_id, &buf)?;
    }
    Ok(d)
}

/// Sorted ids of users with at least one training sample.
pub fn training_users(users: &[UserFeatures]) -> Vec<UserId> {
    let mut v: Vec<UserId> = users
        .iter()
        .filter(|u| !u.split(Split::Train).is_empty())
        .map(|u| u.user.clone())
        .collect();
    v.sort();
    v
}

/// Train, cluster and test datasets over the training users, scaled by a
/// scaler fitted on the training rows.
pub struct Prepared {
    pub users: Vec<UserId>,
    pub scaler: Scaler,
    pub train: Dataset,
    pub cluster: Dataset,
    pub test: Dataset,
}

pub fn prepare(users: &[UserFeatures], dim: usize) -> Result<Prepared> {
    let ids = training_users(users);
    let keep: BTreeSet<&UserId> = ids.iter().collect();
    let rows = |s: Split| -> Vec<FeatureVector> {
        users
            .iter()
            .filter(|u| keep.contains(&u.user))
            .flat_map(|u| u.split(s).iter().cloned())
            .collect()
    };
    let train_rows = rows(Split::Train);
    let raw = build_dataset(&ids, &train_rows, dim, None)?;
    let scaler = Scaler::fit(&raw.x)?;
    Ok(Prepared {
        train: build_dataset(&ids, &train_rows, dim, Some(&scaler))?,
        cluster: build_dataset(&ids, &rows(Split::Cluster), dim, Some(&scaler))?,
        test: build_dataset(&ids, &rows(Split::Test), dim, Some(&scaler))?,
        users: ids,
        scaler,
    })
}

pub fn train_model(p: &Prepared, gbdt: &GbdtConfig, hierarchy: &HierarchyConfig) -> Result<Model> {
    Ok(train_hierarchy(&GbdtTrainer::new(gbdt.clone()), &p.train, &p.cluster, hierarchy)?)
}

/// Generates and featurizes a synthetic cohort without touching the disk.
pub fn featurize_cohort(cohort: &Cohort, cfg: &FeaturizeConfig) -> Result<Vec<(UserProfile, UserFeatures)>> {
    (0..cohort.n_users)
        .into_par_iter()
        .map(|i| {
            let profile = cohort.user(i)?;
            let replays = cohort.replays(&profile)?;
            let named: Vec<(String, &Replay)> = replays.iter().enumerate().map(|(k, r)| (format!("r{k:04}"), r)).collect();
            let f = featurize_user(&named, cfg)?;
            Ok((profile, f))
        })
        .collect()
}

/// Feature-type schema with head-height statistics as the static proxy.
pub fn default_schema(variant: Variant) -> Vec<FeatureType> {
    feature_types(variant, &HEAD_HEIGHT_PROXY)
}

// Workspace stages.

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config: serde_json::Value,
    /// Input file name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// Outcome of a stage run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    /// Inputs and configuration match the recorded manifest and outputs are
    /// intact.
    UpToDate,
}

impl Workspace {
    /// Opens an existing workspace directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::Workspace(format!("{} is not a directory", root.display())));
        }
        Ok(Workspace { root })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn replays_dir(&self) -> PathBuf {
        self.path("replays")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.path("model")
    }

    pub fn features(&self, split: Split) -> PathBuf {
        self.path(&format!("features/{}.csv", split.as_str()))
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.path(&format!("{stage}.manifest.json"))
    }

    fn digest(&self, rel: &str) -> Result<String> {
        Ok(sha256_hex(&std::fs::read(self.path(rel))?))
    }

    fn digests(&self, files: &[String]) -> Result<BTreeMap<String, String>> {
        files.iter().map(|f| Ok((f.clone(), self.digest(f)?))).collect()
    }

    /// True when a manifest with this stage, config and inputs exists and
    /// every recorded output still has its recorded digest.
    fn up_to_date(&self, stage: &str, config: &serde_json::Value, inputs: &BTreeMap<String, String>) -> bool {
        let Ok(text) = std::fs::read_to_string(self.manifest_path(stage)) else {
            return false;
        };
        let Ok(m) = serde_json::from_str::<StageManifest>(&text) else {
            return false;
        };
        m.stage == stage
            && &m.config == config
            && &m.inputs == inputs
            && m
                .outputs
                .iter()
                .all(|(f, h)| self.digest(f).map(|d| &d == h).unwrap_or(false))
    }

    fn record(&self, stage: &str, config: serde_json::Value, inputs: BTreeMap<String, String>, outputs: &[String]) -> Result<()> {
        let m = StageManifest {
            stage: stage.to_string(),
            config,
            inputs,
            outputs: self.digests(outputs)?,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(self.manifest_path(stage), text)?;
        Ok(())
    }

    /// Replay files per user, relative to the workspace, sorted.
    pub fn replay_files(&self) -> Result<BTreeMap<String, Vec<String>>> {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let dir = self.replays_dir();
        if !dir.is_dir() {
            return Ok(out);
        }
        for user in std::fs::read_dir(&dir)? {
            let user = user?;
            if !user.file_type()?.is_dir() {
                continue;
            }
            let name = user.file_name().to_string_lossy().into_owned();
            let mut files = Vec::new();
            for f in std::fs::read_dir(user.path())? {
                let f = f?;
                let fname = f.file_name().to_string_lossy().into_owned();
                if fname.ends_with(&format!(".{}", midr::EXTENSION)) {
                    files.push(format!("replays/{name}/{fname}"));
                }
            }
            files.sort();
            if !files.is_empty() {
                out.insert(name, files);
            }
        }
        Ok(out)
    }

    /// Stores a replay under `replays/<user>/<id>.midr`.
    pub fn store_replay(&self, id: &str, replay: &Replay) -> Result<PathBuf> {
        let user = &replay.metadata.user_id.0;
        if !safe_name(user) || !safe_name(id) {
            return Err(Error::Workspace(format!("unsafe file name for {user:?}/{id:?}")));
        }
        let dir = self.replays_dir().join(user);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{id}.{}", midr::EXTENSION));
        midr::write_file(&path, replay)?;
        Ok(path)
    }
}

fn safe_name(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.@+".contains(c))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub sessions_per_user: u32,
    pub replays_per_session: u32,
    pub notes_per_replay: usize,
    pub fps: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let c = Cohort::default();
        SynthConfig {
            users: c.n_users,
            sessions_per_user: c.sessions_per_user,
            replays_per_session: c.replays_per_session,
            notes_per_replay: c.notes_per_replay,
            fps: c.fps,
            noise_scale: c.noise_scale,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn cohort(&self) -> Cohort {
        Cohort {
            seed: self.seed,
            n_users: self.users,
            priors: Priors::default(),
            sessions_per_user: self.sessions_per_user,
            replays_per_session: self.replays_per_session,
            notes_per_replay: self.notes_per_replay,
            fps: self.fps,
            noise_scale: self.noise_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub user_id: String,
    pub height: f64,
    pub arm_length: f64,
    pub swing_amplitude: f64,
    pub tempo_bias: f64,
    pub lead_time: f64,
    pub jitter: [f64; 3],
    pub head_pitch: f64,
    pub head_forward: f64,
    pub head_bob: f64,
    pub hand_spread: f64,
    pub hand_rest_height: f64,
    pub grip_roll: f64,
    pub swing_rotation: f64,
    pub seed: u64,
}

impl From<&UserProfile> for TruthEntry {
    fn from(p: &UserProfile) -> Self {
        TruthEntry {
            user_id: p.user_id.0.clone(),
            height: p.height,
            arm_length: p.arm_length,
            swing_amplitude: p.swing_amplitude,
            tempo_bias: p.tempo_bias,
            lead_time: p.lead_time,
            jitter: p.jitter,
            head_pitch: p.head_pitch,
            head_forward: p.head_forward,
            head_bob: p.head_bob,
            hand_spread: p.hand_spread,
            hand_rest_height: p.hand_rest_height,
            grip_roll: p.grip_roll,
            swing_rotation: p.swing_rotation,
            seed: p.seed,
        }
    }
}

/// Generates a synthetic corpus into `replays/` plus `truth.json`.
pub fn run_synth(ws: &Workspace, cfg: &SynthConfig) -> Result<Outcome> {
    let config = serde_json::to_value(cfg)?;
    if ws.up_to_date("synth", &config, &BTreeMap::new()) {
        return Ok(Outcome::UpToDate);
    }
    let cohort = cfg.cohort();
    let results: Vec<Result<(TruthEntry, Vec<String>)>> = (0..cfg.users)
        .into_par_iter()
        .map(|i| {
            let profile = cohort.user(i)?;
            let mut files = Vec::new();
            for (k, r) in cohort.replays(&profile)?.iter().enumerate() {
                let id = format!("{}_{k:04}", profile.user_id);
                ws.store_replay(&id, r)?;
                files.push(format!("replays/{}/{id}.{}", profile.user_id, midr::EXTENSION));
            }
            Ok((TruthEntry::from(&profile), files))
        })
        .collect();
    let mut truth = Vec::new();
    let mut outputs = Vec::new();
    for r in results {
        let (t, f) = r?;
        truth.push(t);
        outputs.extend(f);
    }
    let mut text = serde_json::to_string_pretty(&truth)?;
    text.push('\n');
    write_atomic(&ws.path("truth.json"), text.as_bytes())?;
    outputs.push("truth.json".to_string());
    ws.record("synth", config, BTreeMap::new(), &outputs)?;
    Ok(Outcome::Ran)
}

/// Result of importing one file.
#[derive(Debug, Clone, PartialEq)]
pub struct Imported {
    pub source: PathBuf,
    pub stored: PathBuf,
    pub user: UserId,
    pub dropped_events: usize,
}

/// Imports BSOR (`.bsor`) or MIDR1 files into the workspace.
pub fn run_import(ws: &Workspace, files: &[PathBuf]) -> Result<Vec<Imported>> {
    let mut out = Vec::new();
    for f in files {
        let bytes = std::fs::read(f)?;
        let is_bsor = f.extension().is_some_and(|e| e.eq_ignore_ascii_case("bsor"));
        let (replay, dropped) = if is_bsor {
            let imp = crate::bsor::import_bsor(&bytes[..]).map_err(|e| Error::parse(f, e.to_string()))?;
            (imp.replay, imp.dropped_events)
        } else {
            (midr::from_bytes(&bytes).map_err(|e| Error::parse(f, e.to_string()))?, 0)
        };
        let stem = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "replay".into());
        let id: String = stem
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_".contains(c) { c } else { '_' })
            .collect();
        let stored = ws.store_replay(&id, &replay)?;
        out.push(Imported {
            source: f.clone(),
            stored,
            user: replay.metadata.user_id.clone(),
            dropped_events: dropped,
        });
    }
    let outputs: Vec<String> = out
        .iter()
        .filter_map(|i| i.stored.strip_prefix(&ws.root).ok())
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    let config = serde_json::json!({
        "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
    });
    ws.record("import", config, BTreeMap::new(), &outputs)?;
    Ok(out)
}

/// Summary of a featurize run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeaturizeSummary {
    pub users: usize,
    pub low_quality_replays: usize,
    /// Samples per split, indexed like [`Split::ALL`].
    pub samples: [usize; 4],
}

fn load_user_replays(ws: &Workspace, files: &[String]) -> Result<Vec<(String, Replay)>> {
    files
        .iter()
        .map(|f| {
            let r = midr::read_file(&ws.path(f))?;
            let id = Path::new(f)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((id, r))
        })
        .collect()
}

/// Sessionizes, splits and samples every user; writes per-split feature
/// files, the split manifest, user attributes and the scaler.
pub fn run_featurize(ws: &Workspace, cfg: &FeaturizeConfig) -> Result<(Outcome, FeaturizeSummary)> {
    let variant = cfg.variant()?;
    cfg.ratios().validate()?;
    let by_user = ws.replay_files()?;
    if by_user.is_empty() {
        return Err(Error::Workspace("no replays; run import or synth first".into()));
    }
    let all_files: Vec<String> = by_user.values().flatten().cloned().collect();
    let inputs = ws.digests(&all_files)?;
    let config = serde_json::to_value(cfg)?;
    if ws.up_to_date("featurize", &config, &inputs) {
        return Ok((Outcome::UpToDate, FeaturizeSummary::default()));
    }

    let users: Vec<(&String, &Vec<String>)> = by_user.iter().collect();
    let results: Vec<Result<(UserFeatures, usize)>> = users
        .par_iter()
        .map(|(_, files)| {
            let replays = load_user_replays(ws, files)?;
            let low = replays.iter().filter(|(_, r)| r.is_low_quality()).count();
            let good: Vec<(String, &Replay)> = replays
                .iter()
                .filter(|(_, r)| !r.is_low_quality())
                .map(|(id, r)| (id.clone(), r))
                .collect();
            if good.is_empty() {
                return Err(Error::Workspace(format!("{}: every replay is low quality", files[0])));
            }
            Ok((featurize_user(&good, cfg)?, low))
        })
        .collect();
    let mut features = Vec::new();
    let mut summary = FeaturizeSummary::default();
    for r in results {
        match r {
            Ok((f, low)) => {
                summary.low_quality_replays += low;
                features.push(f);
            }
            Err(Error::Workspace(m)) => log::warn!("{m}; user skipped"),
            Err(e) => return Err(e),
        }
    }
    summary.users = features.len();

    let mut split_rows = Vec::new();
    for f in &features {
        for s in &f.sessions {
            split_rows.push(SplitRow {
                user_id: f.user.clone(),
                session_id: s.id,
                split: f.assignment.split_of(s.id).expect("every session is assigned"),
                start: s.start_time,
                end: s.end_time,
                replay_ids: s.replay_ids.clone(),
            });
        }
    }
    let mut buf = Vec::new();
    formats::write_splits(&mut buf, &split_rows)?;
    write_atomic(&ws.path("splits.csv"), &buf)?;
    write_atomic(&ws.path("users.csv"), &users_csv(&features)?)?;

    let mut outputs = vec!["splits.csv".to_string(), "users.csv".to_string()];
    for (i, split) in Split::ALL.into_iter().enumerate() {
        let rows: Vec<FeatureVector> = features.iter().flat_map(|f| f.samples[i].iter().cloned()).collect();
        summary.samples[i] = rows.len();
        let mut buf = Vec::new();
        formats::write_features(&mut buf, variant, &rows)?;
        write_atomic(&ws.features(split), &buf)?;
        outputs.push(format!("features/{}.csv", split.as_str()));
        if split == Split::Train {
            let users = training_users(&features);
            let raw = build_dataset(&users, &rows, variant.dim(), None)?;
            let scaler = Scaler::fit(&raw.x)?;
            let mut buf = Vec::new();
            formats::write_scaler(&mut buf, &scaler)?;
            write_atomic(&ws.path("scaler.txt"), &buf)?;
            outputs.push("scaler.txt".to_string());
        }
    }
    // A fresh featurization invalidates users added to an earlier model.
    let _ = std::fs::remove_file(ws.path("features/added.csv"));
    ws.record("featurize", config, inputs, &outputs)?;
    Ok((Outcome::Ran, summary))
}

fn users_csv(features: &[UserFeatures]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["user_id", "headset", "platform", "country", "replay_count", "self_height", "handedness"])?;
    for f in features {
        let a = &f.attributes;
        w.write_record([
            f.user.0.as_str(),
            &a.headset,
            &a.platform,
            &a.country,
            &a.replay_count.map_or(String::new(), |c| c.to_string()),
            &format!("{:e}", a.self_height),
            a.handedness.map_or("", |h| h.as_str()),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Workspace(e.to_string()))
}

pub fn read_users_csv(path: &Path) -> Result<BTreeMap<UserId, UserAttributes>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 7 {
            return Err(Error::parse(path, "users.csv rows need 7 fields"));
        }
        out.insert(
            UserId(rec[0].to_string()),
            UserAttributes {
                headset: rec[1].to_string(),
                platform: rec[2].to_string(),
                country: rec[3].to_string(),
                replay_count: rec[4].parse().ok(),
                self_height: rec[5].parse().unwrap_or(f64::NAN),
                handedness: match &rec[6] {
                    "left" => Some(motionid_core::replay::Handedness::Left),
                    "right" => Some(motionid_core::replay::Handedness::Right),
                    _ => None,
                },
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub groups: usize,
    pub seed: u64,
    pub max_component_size: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub num_leaves: usize,
    pub max_bin: usize,
    pub min_data_in_leaf: usize,
    pub min_child_weight: f64,
    pub min_split_gain: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub colsample_bytree: f64,
    pub goss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::from_gbdt(&GbdtConfig::default(), 10, 0)
    }
}

impl TrainConfig {
    pub fn from_gbdt(g: &GbdtConfig, groups: usize, seed: u64) -> Self {
        TrainConfig {
            groups,
            seed,
            max_component_size: HierarchyConfig::default().max_component_size,
            learning_rate: g.learning_rate,
            rounds: g.n_estimators,
            num_leaves: g.num_leaves,
            max_bin: g.max_bin,
            min_data_in_leaf: g.min_data_in_leaf,
            min_child_weight: g.min_child_weight,
            min_split_gain: g.min_split_gain,
            reg_alpha: g.reg_alpha,
            reg_lambda: g.reg_lambda,
            colsample_bytree: g.colsample_bytree,
            goss: g.goss_enabled,
        }
    }

    pub fn gbdt(&self) -> GbdtConfig {
        GbdtConfig {
            learning_rate: self.learning_rate,
            n_estimators: self.rounds,
            num_leaves: self.num_leaves,
            max_bin: self.max_bin,
            min_data_in_leaf: self.min_data_in_leaf,
            min_child_weight: self.min_child_weight,
            min_split_gain: self.min_split_gain,
            reg_alpha: self.reg_alpha,
            reg_lambda: self.reg_lambda,
            colsample_bytree: self.colsample_bytree,
            goss_enabled: self.goss,
            seed: self.seed,
            ..GbdtConfig::default()
        }
    }

    pub fn hierarchy(&self) -> HierarchyConfig {
        HierarchyConfig {
            n_groups: self.groups,
            seed: self.seed,
            max_component_size: self.max_component_size,
            ..HierarchyConfig::default()
        }
    }
}

/// Reads a feature split and the scaler, returning raw rows and the scaler.
fn load_split(ws: &Workspace, split: Split) -> Result<(Variant, Vec<FeatureVector>)> {
    let path = ws.features(split);
    if !path.is_file() {
        return Err(Error::Workspace(format!("{} missing; run featurize first", path.display())));
    }
    formats::read_features(&path)
}

fn load_scaler(ws: &Workspace) -> Result<Scaler> {
    let path = ws.path("scaler.txt");
    if !path.is_file() {
        return Err(Error::Workspace("scaler.txt missing; run featurize first".into()));
    }
    formats::read_scaler(&path)
}

fn sorted_users(rows: &[FeatureVector]) -> Vec<UserId> {
    let set: BTreeSet<&UserId> = rows.iter().map(|r| &r.user_id).collect();
    set.into_iter().cloned().collect()
}

/// Trains the hierarchy from the featurized train and cluster splits.
pub fn run_train(ws: &Workspace, cfg: &TrainConfig) -> Result<(Outcome, usize)> {
    let files = vec![
        "features/train.csv".to_string(),
        "features/cluster.csv".to_string(),
        "scaler.txt".to_string(),
    ];
    for f in &files {
        if !ws.path(f).is_file() {
            return Err(Error::Workspace(format!("{f} missing; run featurize first")));
        }
    }
    let inputs = ws.digests(&files)?;
    let config = serde_json::to_value(cfg)?;
    if ws.up_to_date("train", &config, &inputs) {
        return Ok((Outcome::UpToDate, 0));
    }
    let (variant, train_rows) = load_split(ws, Split::Train)?;
    let (_, cluster_rows) = load_split(ws, Split::Cluster)?;
    let scaler = load_scaler(ws)?;
    let users = sorted_users(&train_rows);
    let cluster_rows: Vec<FeatureVector> = cluster_rows.into_iter().filter(|r| users.binary_search(&r.user_id).is_ok()).collect();
    let train = build_dataset(&users, &train_rows, variant.dim(), Some(&scaler))?;
    let cluster = build_dataset(&users, &cluster_rows, variant.dim(), Some(&scaler))?;
    let model = train_hierarchy(&GbdtTrainer::new(cfg.gbdt()), &train, &cluster, &cfg.hierarchy())?;
    let manifest = modeldir::save(&ws.model_dir(), &model)?;
    let _ = std::fs::remove_file(ws.path("features/added.csv"));
    let mut outputs = vec!["model/manifest.json".to_string()];
    outputs.extend(manifest.layers.iter().flat_map(|l| l.groups.iter().map(|g| format!("model/{}", g.file))));
    outputs.extend(manifest.components.iter().map(|c| format!("model/{}", c.file)));
    ws.record("train", config, inputs, &outputs)?;
    Ok((Outcome::Ran, model.n_models()))
}

pub fn load_model(ws: &Workspace) -> Result<Model> {
    if !ws.model_dir().join(modeldir::MANIFEST).is_file() {
        return Err(Error::Workspace("no trained model; run train first".into()));
    }
    modeldir::load(&ws.model_dir())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub samples_per_user: usize,
    pub curve: Vec<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            samples_per_user: 50,
            curve: eval::DEFAULT_CURVE.to_vec(),
        }
    }
}

/// Evaluates the trained model on the test split and writes `report.txt`
/// and `per_user.csv`.
pub fn run_evaluate(ws: &Workspace, cfg: &EvaluateConfig) -> Result<EvalReport> {
    let model = load_model(ws)?;
    let inputs = ws.digests(&[
        "model/manifest.json".to_string(),
        "features/test.csv".to_string(),
        "scaler.txt".to_string(),
        "splits.csv".to_string(),
    ])?;
    let (variant, test_rows) = load_split(ws, Split::Test)?;
    let scaler = load_scaler(ws)?;
    let known: BTreeSet<&UserId> = model.users.iter().collect();
    let test_rows: Vec<FeatureVector> = test_rows.into_iter().filter(|r| known.contains(&r.user_id)).collect();
    let users = sorted_users(&test_rows);
    let test = build_dataset(&users, &test_rows, variant.dim(), Some(&scaler))?;
    let splits = formats::assignments(&formats::read_splits(&ws.path("splits.csv"))?);
    let test_sessions: BTreeMap<UserId, BTreeSet<u32>> = splits.into_iter().map(|(u, a)| (u, a.test)).collect();
    let check = eval::session_check(&test_sessions);
    let options = EvalOptions {
        samples_per_user: cfg.samples_per_user,
        curve: cfg.curve.clone(),
        mode: Mode::Full,
    };
    let mut report = eval::evaluate(&model, &test, &options, Some(&check))?;
    let attrs = read_users_csv(&ws.path("users.csv")).unwrap_or_default();
    report.group_accuracies = eval::impact_factors(&report.per_user, &attrs);
    match eval::importance_by_type(&model, &default_schema(variant)) {
        Ok(i) => report.importance_by_type = i,
        Err(motionid_core::Error::Untrained) => log::warn!("no model has splits; importance omitted"),
        Err(e) => return Err(e.into()),
    }
    write_atomic(&ws.path("report.txt"), report::render(&report, variant).as_bytes())?;
    write_atomic(&ws.path("per_user.csv"), &report::per_user_csv(&report)?)?;
    ws.record(
        "evaluate",
        serde_json::to_value(cfg)?,
        inputs,
        &["report.txt".to_string(), "per_user.csv".to_string()],
    )?;
    Ok(report)
}

/// Scaled feature rows of a replay or feature file for identification.
pub fn identification_rows(ws: &Workspace, input: &Path, variant: Variant) -> Result<Matrix> {
    let scaler = load_scaler(ws)?;
    let rows: Vec<Vec<f64>> = if input.extension().is_some_and(|e| e == "csv") {
        let (v, rows) = formats::read_features(input)?;
        if v != variant {
            return Err(Error::Workspace(format!("{} holds {v} features, model uses {variant}", input.display())));
        }
        rows.into_iter().map(|r| r.values).collect()
    } else {
        let bytes = std::fs::read(input)?;
        let replay = if input.extension().is_some_and(|e| e.eq_ignore_ascii_case("bsor")) {
            crate::bsor::import_bsor(&bytes[..])?.replay
        } else {
            midr::from_bytes(&bytes).map_err(|e| Error::parse(input, e.to_string()))?
        };
        let f = featurize_config(ws).featurizer()?;
        f.featurize_all(&[(0, &replay)], variant).into_iter().map(|r| r.values).collect()
    };
    if rows.is_empty() {
        return Err(Error::Workspace(format!("{}: no featurizable samples", input.display())));
    }
    let mut m = Matrix::from_rows(variant.dim(), &rows)?;
    for i in 0..m.rows() {
        scaler.transform_row(m.row_mut(i))?;
    }
    Ok(m)
}

/// The configuration of the last featurize run, or the default.
pub fn featurize_config(ws: &Workspace) -> FeaturizeConfig {
    std::fs::read_to_string(ws.manifest_path("featurize"))
        .ok()
        .and_then(|t| serde_json::from_str::<StageManifest>(&t).ok())
        .and_then(|m| serde_json::from_value(m.config).ok())
        .unwrap_or_default()
}

/// Variants have distinct widths, so the model's width names its variant.
fn model_variant(model: &Model) -> Result<Variant> {
    Variant::ALL
        .into_iter()
        .find(|v| v.dim() == model.n_features)
        .ok_or_else(|| Error::Workspace(format!("no variant has {} features", model.n_features)))
}

/// Ranked candidates for the samples in `input`.
pub fn run_identify(ws: &Workspace, input: &Path, top: usize) -> Result<Vec<(UserId, f64)>> {
    let model = load_model(ws)?;
    let variant = model_variant(&model)?;
    let x = identification_rows(ws, input, variant)?;
    let id = model.identify(&x, Mode::Full)?;
    Ok(id
        .ranking
        .into_iter()
        .take(top)
        .map(|(u, s)| (model.users[u].clone(), s))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddUserSummary {
    pub user: UserId,
    pub samples: usize,
    /// Model files rewritten, relative to the model directory.
    pub retrained: Vec<String>,
}

/// Adds the user behind `files` to the trained model. All of the user's
/// sessions supply training samples.
pub fn run_add_user(ws: &Workspace, files: &[PathBuf], samples: usize, seed: u64) -> Result<AddUserSummary> {
    let mut model = load_model(ws)?;
    let variant = model_variant(&model)?;
    let scaler = load_scaler(ws)?;
    let replays: Vec<(String, Replay)> = files
        .iter()
        .map(|f| {
            let r = midr::read_file(f)?;
            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, r))
        })
        .collect::<Result<_>>()?;
    let named: Vec<(String, &Replay)> = replays.iter().map(|(i, r)| (i.clone(), r)).collect();
    let cfg = FeaturizeConfig {
        variant: variant.name().to_string(),
        ratios: [1.0, 0.0, 0.0, 0.0],
        train_samples: samples,
        seed,
        ..featurize_config(ws)
    };
    let f = featurize_user(&named, &cfg)?;
    let new_rows = f.split(Split::Train).to_vec();
    if new_rows.is_empty() {
        return Err(Error::Workspace(format!("user {}: no featurizable samples", f.user)));
    }

    let (_, mut train_rows) = load_split(ws, Split::Train)?;
    let added_path = ws.path("features/added.csv");
    let mut added = if added_path.is_file() {
        formats::read_features(&added_path)?.1
    } else {
        Vec::new()
    };
    train_rows.extend(added.iter().cloned());
    let train = build_dataset(&model.users, &train_rows, variant.dim(), Some(&scaler))?;
    let x = build_dataset(std::slice::from_ref(&f.user), &new_rows, variant.dim(), Some(&scaler))?.x;
    let before = modeldir::read_manifest(&ws.model_dir())?;
    let targets = model.add_user(&GbdtTrainer::new(first_gbdt_config(&model)), &train, f.user.clone(), &x)?;
    let after = modeldir::save(&ws.model_dir(), &model)?;
    added.extend(new_rows.iter().cloned());
    let mut buf = Vec::new();
    formats::write_features(&mut buf, variant, &added)?;
    write_atomic(&added_path, &buf)?;

    let mut retrained = Vec::new();
    for (lb, la) in before.layers.iter().zip(&after.layers) {
        for (gb, ga) in lb.groups.iter().zip(&la.groups) {
            if gb.sha256 != ga.sha256 {
                retrained.push(ga.file.clone());
            }
        }
    }
    debug_assert_eq!(targets.len(), 2);
    let inputs = files
        .iter()
        .map(|f| Ok((f.display().to_string(), sha256_hex(&std::fs::read(f)?))))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let config = serde_json::json!({ "user": f.user.0, "samples_per_user": samples, "seed": seed });
    ws.record(
        "adduser",
        config,
        inputs,
        &["model/manifest.json".to_string(), "features/added.csv".to_string()],
    )?;
    Ok(AddUserSummary {
        user: f.user,
        samples: new_rows.len(),
        retrained,
    })
}

/// The boosting configuration recorded in the model's first group file.
fn first_gbdt_config(model: &Model) -> GbdtConfig {
    let m = &model.layers[0].models[0];
    let mut c = m.config.clone();
    c.seed = model.config.seed;
    c
}

//! Identification metrics over a held-out test split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::features::FeatureType;
use crate::gbdt::Explain;
use crate::hierarchy::{HierarchicalModel, Mode};
use crate::matrix::Dataset;
use crate::par;
use crate::replay::{Handedness, UserId};

/// Sample counts of the default accuracy curve.
/// Answers whether a user's session belongs to the test split.
pub type SessionGuard<'a> = dyn Fn(&UserId, u32) -> bool + Sync + 'a;

pub const DEFAULT_CURVE: [usize; 5] = [1, 5, 15, 30, 50];
/// Seconds of telemetry behind one sample.
pub const SECONDS_PER_SAMPLE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Samples aggregated per user for the per-user and top-k metrics.
    pub samples_per_user: usize,
    pub curve: Vec<usize>,
    pub mode: Mode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            samples_per_user: 50,
            curve: DEFAULT_CURVE.to_vec(),
            mode: Mode::Full,
        }
    }
}

/// Outcome for one evaluated user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserResult {
    pub user: UserId,
    pub samples: usize,
    pub predicted: UserId,
    /// 1-based rank of the true user in the aggregated ranking.
    pub rank: usize,
    pub correct_samples: usize,
    /// Correctness after aggregating the first `n` samples, per curve point.
    pub curve: Vec<bool>,
}

impl UserResult {
    pub fn correct(&self) -> bool {
        self.rank == 1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_sample_accuracy: f64,
    pub per_user_accuracy: f64,
    /// Keyed by k (1, 3, 5).
    pub top_k_accuracies: BTreeMap<usize, f64>,
    /// Keyed by sample count; seconds are `SECONDS_PER_SAMPLE` times the key.
    pub accuracy_by_sample_count: BTreeMap<usize, f64>,
    /// Keyed by (attribute, bucket).
    pub group_accuracies: BTreeMap<(String, String), Bucket>,
    pub importance_by_type: BTreeMap<FeatureType, f64>,
    pub users_evaluated: usize,
    /// Test users without a single sample.
    pub users_excluded: usize,
    pub samples_evaluated: usize,
    pub per_user: Vec<UserResult>,
}

fn frac(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Evaluates `model` on `test`. Each user's first `samples_per_user` rows
/// (in dataset order) form one presentation.
///
/// `allowed` is asked for every evaluated sample whether its session belongs
/// to the test split; a refusal aborts with [`Error::SessionLeak`].
pub fn evaluate<M: Classifier>(
    model: &HierarchicalModel<M>,
    test: &Dataset,
    options: &EvalOptions,
    allowed: Option<&SessionGuard>,
) -> Result<EvalReport> {
    if options.samples_per_user == 0 || options.curve.contains(&0) {
        return Err(Error::InvalidConfig("sample counts must be positive".to_string()));
    }
    let index: BTreeMap<&UserId, usize> = model.users.iter().enumerate().map(|(i, u)| (u, i)).collect();
    let by_user = test.rows_by_user();
    let mut work = Vec::new();
    let mut excluded = 0;
    for (t, rows) in by_user.into_iter().enumerate() {
        let user = &test.users[t];
        if rows.is_empty() {
            excluded += 1;
            continue;
        }
        let truth = *index.get(user).ok_or_else(|| Error::UnknownUser(user.to_string()))?;
        let take = options.samples_per_user.max(options.curve.iter().copied().max().unwrap_or(0));
        let rows: Vec<usize> = rows.into_iter().take(take).collect();
        if let Some(check) = allowed {
            if let Some(&r) = rows.iter().find(|&&r| !check(user, test.sessions[r])) {
                return Err(Error::SessionLeak {
                    user: user.to_string(),
                    session: test.sessions[r],
                });
            }
        }
        work.push((t, truth, rows));
    }
    if excluded > 0 {
        log::warn!("{excluded} test users have no samples and are excluded");
    }

    let results = par::map(&work, |(t, truth, rows)| -> Result<UserResult> {
        let x = test.x.select_rows(rows);
        let scores = model.sample_scores(&x)?;
        let n = rows.len().min(options.samples_per_user);
        let mut correct_samples = 0;
        for i in 0..n {
            if model.decide(&scores, &x, &[i], options.mode)?.predicted() == *truth {
                correct_samples += 1;
            }
        }
        let first: Vec<usize> = (0..n).collect();
        let id = model.decide(&scores, &x, &first, options.mode)?;
        let mut curve = Vec::with_capacity(options.curve.len());
        for &c in &options.curve {
            let sel: Vec<usize> = (0..c.min(rows.len())).collect();
            curve.push(model.decide(&scores, &x, &sel, options.mode)?.predicted() == *truth);
        }
        Ok(UserResult {
            user: test.users[*t].clone(),
            samples: n,
            predicted: model.users[id.predicted()].clone(),
            rank: id.rank_of(*truth).expect("ranking covers every user"),
            correct_samples,
            curve,
        })
    });
    let per_user = results.into_iter().collect::<Result<Vec<_>>>()?;

    let users = per_user.len();
    let samples: usize = per_user.iter().map(|u| u.samples).sum();
    let mut report = EvalReport {
        per_sample_accuracy: frac(per_user.iter().map(|u| u.correct_samples).sum(), samples),
        per_user_accuracy: frac(per_user.iter().filter(|u| u.correct()).count(), users),
        users_evaluated: users,
        users_excluded: excluded,
        samples_evaluated: samples,
        ..EvalReport::default()
    };
    for k in [1, 3, 5] {
        let hits = per_user.iter().filter(|u| u.rank <= k).count();
        report.top_k_accuracies.insert(k, frac(hits, users));
    }
    for (j, &c) in options.curve.iter().enumerate() {
        let hits = per_user.iter().filter(|u| u.curve[j]).count();
        report.accuracy_by_sample_count.insert(c, frac(hits, users));
    }
    report.per_user = per_user;
    Ok(report)
}

/// Per-user accuracy after aggregating the first `count` samples, for each
/// count.
pub fn accuracy_curve<M: Classifier>(
    model: &HierarchicalModel<M>,
    test: &Dataset,
    counts: &[usize],
    mode: Mode,
) -> Result<BTreeMap<usize, f64>> {
    let options = EvalOptions {
        samples_per_user: counts.iter().copied().max().unwrap_or(1),
        curve: counts.to_vec(),
        mode,
    };
    Ok(evaluate(model, test, &options, None)?.accuracy_by_sample_count)
}

/// Attributes the impact-factor analysis groups users by.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserAttributes {
    pub headset: String,
    pub platform: String,
    pub country: String,
    pub replay_count: Option<usize>,
    /// Meters; NaN when unknown.
    pub self_height: f64,
    pub handedness: Option<Handedness>,
}

/// Correct and total users in one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bucket {
    pub correct: usize,
    pub total: usize,
}

impl Bucket {
    pub fn accuracy(&self) -> f64 {
        frac(self.correct, self.total)
    }
}

pub const UNKNOWN: &str = "unknown";

/// Bucket label for a user's replay count.
pub fn replay_count_band(n: usize) -> &'static str {
    match n {
        0..=5 => "<=5",
        6..=10 => "6-10",
        11..=24 => "11-24",
        25..=99 => "25-99",
        _ => ">=100",
    }
}

/// Bucket label for a self-reported height in meters.
pub fn height_band(h: f64) -> &'static str {
    if !h.is_finite() || h <= 0.0 {
        UNKNOWN
    } else if h < 1.5 {
        "<1.5"
    } else if h < 1.6 {
        "1.5-1.6"
    } else if h < 1.7 {
        "1.6-1.7"
    } else if h < 1.8 {
        "1.7-1.8"
    } else if h < 1.9 {
        "1.8-1.9"
    } else {
        ">=1.9"
    }
}

fn or_unknown(s: &str) -> String {
    if s.is_empty() {
        UNKNOWN.to_string()
    } else {
        s.to_string()
    }
}

/// Groups per-user correctness by headset, platform, country, replay-count
/// band, self-height band and handedness. Users without attributes, or with
/// an attribute missing, land in the `unknown` bucket.
pub fn impact_factors(
    per_user: &[UserResult],
    attributes: &BTreeMap<UserId, UserAttributes>,
) -> BTreeMap<(String, String), Bucket> {
    let mut out: BTreeMap<(String, String), Bucket> = BTreeMap::new();
    let none = UserAttributes {
        self_height: f64::NAN,
        ..UserAttributes::default()
    };
    for r in per_user {
        let a = attributes.get(&r.user).unwrap_or(&none);
        let keys = [
            ("headset", or_unknown(&a.headset)),
            ("platform", or_unknown(&a.platform)),
            ("country", or_unknown(&a.country)),
            (
                "replay_count",
                a.replay_count.map_or(UNKNOWN, replay_count_band).to_string(),
            ),
            ("self_height", height_band(a.self_height).to_string()),
            (
                "handedness",
                a.handedness.map_or(UNKNOWN, |h| h.as_str()).to_string(),
            ),
        ];
        for (attr, bucket) in keys {
            let b = out.entry((attr.to_string(), bucket)).or_default();
            b.total += 1;
            b.correct += usize::from(r.correct());
        }
    }
    out
}

/// Share of split gain per feature type, averaged over the layer-1 and
/// layer-2 models. Models without any split are skipped.
pub fn importance_by_type<M: Classifier + Explain>(
    model: &HierarchicalModel<M>,
    schema: &[FeatureType],
) -> Result<BTreeMap<FeatureType, f64>> {
    if schema.len() != model.n_features {
        return Err(Error::SchemaMismatch {
            expected: model.n_features,
            found: schema.len(),
        });
    }
    let mut totals: BTreeMap<FeatureType, f64> = schema.iter().map(|t| (*t, 0.0)).collect();
    let mut used = 0usize;
    for m in model.layers.iter().flat_map(|l| l.models.iter()) {
        let imp = match m.feature_importance() {
            Ok(i) => i,
            Err(Error::Untrained) => continue,
            Err(e) => return Err(e),
        };
        used += 1;
        for (t, g) in schema.iter().zip(&imp.gain_fraction) {
            *totals.get_mut(t).expect("schema types are keys") += g;
        }
    }
    if used == 0 {
        return Err(Error::Untrained);
    }
    totals.values_mut().for_each(|v| *v /= used as f64);
    Ok(totals)
}

/// Hygiene check for [`evaluate`]: accepts a sample only when its session
/// is one of its user's test sessions.
pub fn session_check(test_sessions: &BTreeMap<UserId, BTreeSet<u32>>) -> impl Fn(&UserId, u32) -> bool + Sync + '_ {
    move |u, s| test_sessions.get(u).is_some_and(|set| set.contains(&s))
}

#[cfg(test)]
mod tests;

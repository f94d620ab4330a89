//! Session grouping and per-user split assignment.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::replay::{Replay, UserId};

/// Longest pause, in seconds, between the end of one replay and the start of
/// the next that still counts as the same session.
pub const MAX_SESSION_GAP: f64 = 600.0;

/// What the sessionizer needs to know about a replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStamp {
    pub replay_id: String,
    pub user_id: UserId,
    /// Unix seconds.
    pub start: f64,
    pub end: f64,
}

impl ReplayStamp {
    pub fn of(replay_id: impl Into<String>, replay: &Replay) -> Self {
        ReplayStamp {
            replay_id: replay_id.into(),
            user_id: replay.metadata.user_id.clone(),
            start: replay.start_time(),
            end: replay.end_time(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub user_id: UserId,
    /// Chronological index of the session within its user.
    pub id: u32,
    pub replay_ids: Vec<String>,
    pub start_time: f64,
    pub end_time: f64,
}

/// Splits one user's replays into maximal runs where no gap exceeds
/// [`MAX_SESSION_GAP`].
pub fn sessionize(replays: &[ReplayStamp]) -> Result<Vec<Session>> {
    let first = replays.first().ok_or(Error::EmptyInput("sessionize"))?;
    if let Some(other) = replays.iter().find(|r| r.user_id != first.user_id) {
        return Err(Error::MixedUsers(
            first.user_id.0.clone(),
            other.user_id.0.clone(),
        ));
    }
    let mut sorted: Vec<&ReplayStamp> = replays.iter().collect();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start).then_with(|| a.replay_id.cmp(&b.replay_id)));

    let mut out: Vec<Session> = Vec::new();
    for r in sorted {
        match out.last_mut() {
            Some(s) if r.start - s.end_time <= MAX_SESSION_GAP => {
                s.replay_ids.push(r.replay_id.clone());
                if r.end > s.end_time {
                    s.end_time = r.end;
                }
            }
            _ => out.push(Session {
                user_id: r.user_id.clone(),
                id: out.len() as u32,
                replay_ids: alloc::vec![r.replay_id.clone()],
                start_time: r.start,
                end_time: r.end,
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Cluster,
    Validate,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Cluster, Split::Validate, Split::Test];

    /// Order in which minimum-one guarantees are handed out.
    const PRIORITY: [Split; 4] = [Split::Train, Split::Test, Split::Validate, Split::Cluster];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Cluster => "cluster",
            Split::Validate => "validate",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.as_str() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Relative sizes of the train / cluster / validate / test splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub cluster: f64,
    pub validate: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            cluster: 0.1,
            validate: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Train / validate / test without a clustering split.
    pub const TRAIN_VALIDATE_TEST: SplitRatios = SplitRatios {
        train: 0.7,
        cluster: 0.0,
        validate: 0.1,
        test: 0.2,
    };

    fn as_array(&self) -> [f64; 4] {
        [self.train, self.cluster, self.validate, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !r.is_finite() || *r < 0.0) || a.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidConfig("split ratios must be non-negative with a positive sum".to_string()));
        }
        if self.train <= 0.0 {
            return Err(Error::InvalidConfig("train ratio must be positive".to_string()));
        }
        Ok(())
    }

    /// Split sizes for `n` sessions, indexed like [`Split::ALL`].
    ///
    /// Largest-remainder rounding, then every split with a positive ratio is
    /// topped up to one session, in the order train, test, validate, cluster,
    /// by taking from the currently largest split.
    pub fn counts(&self, n: usize) -> [usize; 4] {
        let r = self.as_array();
        let total: f64 = r.iter().sum();
        let mut counts = [0usize; 4];
        let mut frac = [0.0f64; 4];
        for i in 0..4 {
            let q = n as f64 * r[i] / total;
            // Absorb representation error such as 10 * 0.1 / 0.9999999999999999.
            let f = math::floor(q + 1e-9);
            counts[i] = f as usize;
            frac[i] = (q - f).max(0.0);
        }
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<Split> = Split::PRIORITY.to_vec();
        order.sort_by(|a, b| frac[b.slot()].total_cmp(&frac[a.slot()]));
        for s in order.iter().take(n.saturating_sub(assigned)) {
            counts[s.slot()] += 1;
        }

        let required: Vec<Split> = Split::PRIORITY
            .into_iter()
            .filter(|s| r[s.slot()] > 0.0)
            .take(n)
            .collect();
        for s in &required {
            if counts[s.slot()] > 0 {
                continue;
            }
            // Donor: the largest split that can spare one, preferring the
            // lowest-priority split on ties. Protected splits keep their one.
            let donor = Split::PRIORITY
                .into_iter()
                .rev()
                .filter(|d| {
                    let c = counts[d.slot()];
                    c > 1 || (c == 1 && !required.contains(d))
                })
                .max_by_key(|d| counts[d.slot()]);
            if let Some(d) = donor {
                counts[d.slot()] -= 1;
                counts[s.slot()] += 1;
            }
        }
        counts
    }
}

/// Disjoint session sets for one user.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub user_id: UserId,
    pub train: BTreeSet<u32>,
    pub cluster: BTreeSet<u32>,
    pub validate: BTreeSet<u32>,
    pub test: BTreeSet<u32>,
}

impl SplitAssignment {
    pub fn set(&self, split: Split) -> &BTreeSet<u32> {
        match split {
            Split::Train => &self.train,
            Split::Cluster => &self.cluster,
            Split::Validate => &self.validate,
            Split::Test => &self.test,
        }
    }

    fn set_mut(&mut self, split: Split) -> &mut BTreeSet<u32> {
        match split {
            Split::Train => &mut self.train,
            Split::Cluster => &mut self.cluster,
            Split::Validate => &mut self.validate,
            Split::Test => &mut self.test,
        }
    }

    pub fn split_of(&self, session: u32) -> Option<Split> {
        Split::ALL.into_iter().find(|s| self.set(*s).contains(&session))
    }

    /// A user with a single session has nothing to test on but training data.
    pub fn is_degenerate(&self) -> bool {
        self.test.is_empty()
    }

    pub fn len(&self) -> usize {
        Split::ALL.iter().map(|s| self.set(*s).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assigns a user's sessions to splits. The assignment is a seeded shuffle
/// of the session ids cut at [`SplitRatios::counts`].
pub fn assign_splits(sessions: &[Session], ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let first = sessions.first().ok_or(Error::EmptyInput("assign_splits"))?;
    let user = first.user_id.clone();
    if let Some(other) = sessions.iter().find(|s| s.user_id != user) {
        return Err(Error::MixedUsers(user.0.clone(), other.user_id.0.clone()));
    }
    let mut ids: Vec<u32> = sessions.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(math::mix_seed(seed, math::hash_str(&user.0), 0x5e55));
    ids.shuffle(&mut rng);

    let counts = ratios.counts(ids.len());
    let mut out = SplitAssignment {
        user_id: user,
        ..Default::default()
    };
    let mut it = ids.into_iter();
    for s in Split::ALL {
        out.set_mut(s).extend(it.by_ref().take(counts[s.slot()]));
    }
    if out.is_degenerate() && ratios.test > 0.0 {
        log::warn!(
            "user {} has {} session(s): no held-out test session, evaluation falls back to training sessions",
            out.user_id,
            out.len()
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stamp(id: &str, start: f64, end: f64) -> ReplayStamp {
        ReplayStamp {
            replay_id: id.into(),
            user_id: "u".into(),
            start,
            end,
        }
    }

    #[test]
    fn nine_minute_restart_is_same_session() {
        let s = sessionize(&[stamp("a", 0.0, 180.0), stamp("b", 540.0, 700.0)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].replay_ids, ["a", "b"]);
    }

    #[test]
    fn gap_of_601_seconds_splits() {
        let s = sessionize(&[stamp("a", 0.0, 100.0), stamp("b", 701.0, 800.0)]).unwrap();
        assert_eq!(s.len(), 2);
        let s = sessionize(&[stamp("a", 0.0, 100.0), stamp("b", 700.0, 800.0)]).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn single_replay_single_session() {
        let s = sessionize(&[stamp("a", 5.0, 9.0)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].start_time, s[0].end_time), (5.0, 9.0));
    }

    #[test]
    fn mixed_users_rejected() {
        let mut b = stamp("b", 1.0, 2.0);
        b.user_id = "v".into();
        assert!(matches!(
            sessionize(&[stamp("a", 0.0, 1.0), b]),
            Err(Error::MixedUsers(..))
        ));
    }

    #[test]
    fn split_counts_examples() {
        let r = SplitRatios::default();
        // (train, cluster, validate, test)
        assert_eq!(r.counts(10), [7, 1, 1, 1]);
        assert_eq!(r.counts(4), [1, 1, 1, 1]);
        assert_eq!(r.counts(1), [1, 0, 0, 0]);
        assert_eq!(r.counts(2), [1, 0, 0, 1]);
        assert_eq!(r.counts(3), [1, 0, 1, 1]);
        assert_eq!(SplitRatios::TRAIN_VALIDATE_TEST.counts(10), [7, 0, 1, 2]);
    }

    /// Brute force: among all size vectors summing to n that honor the
    /// minimum-one rule, the rule's output is the one closest (L1) to the
    /// exact quotas, which is what largest-remainder plus top-up yields for
    /// the default ratios.
    #[test]
    fn split_counts_match_enumeration() {
        let r = SplitRatios::default();
        let quotas = |n: usize| [0.7 * n as f64, 0.1 * n as f64, 0.1 * n as f64, 0.1 * n as f64];
        for n in 4..40usize {
            let q = quotas(n);
            let mut best: Option<(f64, [usize; 4])> = None;
            for a in 1..=n {
                for b in 1..=n {
                    for c in 1..=n {
                        if a + b + c >= n {
                            continue;
                        }
                        let d = n - a - b - c;
                        let v = [a, b, c, d];
                        let dist: f64 = (0..4).map(|i| (v[i] as f64 - q[i]).abs()).sum();
                        if best.is_none_or(|(bd, _)| dist < bd - 1e-12) {
                            best = Some((dist, v));
                        }
                    }
                }
            }
            let got = r.counts(n);
            let (bd, _) = best.unwrap();
            let gd: f64 = (0..4).map(|i| (got[i] as f64 - q[i]).abs()).sum();
            assert!((gd - bd).abs() < 1e-9, "n={n} got {got:?}");
            assert_eq!(got.iter().sum::<usize>(), n);
            assert!(got.iter().all(|&c| c >= 1));
        }
    }

    fn sessions(n: u32) -> Vec<Session> {
        (0..n)
            .map(|i| Session {
                user_id: "u".into(),
                id: i,
                replay_ids: alloc::vec![],
                start_time: i as f64 * 1e4,
                end_time: i as f64 * 1e4 + 10.0,
            })
            .collect()
    }

    #[test]
    fn assignment_is_seeded_and_disjoint() {
        let s = sessions(13);
        let a = assign_splits(&s, SplitRatios::default(), 7).unwrap();
        let b = assign_splits(&s, SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 13);
        assert_eq!(a.train.len(), 9);
    }

    #[test]
    fn one_session_goes_to_train() {
        let a = assign_splits(&sessions(1), SplitRatios::default(), 1).unwrap();
        assert_eq!(a.train.len(), 1);
        assert!(a.is_degenerate());
    }
}

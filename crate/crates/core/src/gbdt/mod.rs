//! Histogram gradient boosted decision trees for multi-class softmax.
//!
//! Each boosting round fits one regression tree per class on the softmax
//! gradients and hessians. Trees grow leaf-wise (best gain first) on
//! pre-binned features, up to `num_leaves` leaves.

mod binning;
mod grow;
pub mod logistic;

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use binning::{BinMapper, BinnedMatrix};
pub use logistic::{LogisticModel, LogisticTrainer};

use crate::classifier::{self, Classifier, Trainer};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::par;

/// Boosting hyperparameters. `Default` carries the tuned values used for the
/// 5,500-class group models.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtConfig {
    pub learning_rate: f64,
    /// Boosting rounds.
    pub n_estimators: usize,
    pub num_leaves: usize,
    pub max_bin: usize,
    pub min_data_in_leaf: usize,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
    pub min_split_gain: f64,
    /// L1 penalty, applied by soft-thresholding gradient sums.
    pub reg_alpha: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    /// Fraction of features each tree may split on.
    pub colsample_bytree: f64,
    /// `None` for unlimited depth.
    pub max_depth: Option<usize>,
    /// Gradient-based one-side sampling of rows per tree.
    pub goss_enabled: bool,
    pub goss_top_rate: f64,
    pub goss_other_rate: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            learning_rate: 0.1,
            n_estimators: 200,
            num_leaves: 33,
            max_bin: 63,
            min_data_in_leaf: 20,
            min_child_weight: 7.0,
            min_split_gain: 0.947_368_421_052_631_5,
            reg_alpha: 0.789_473_684_210_526_3,
            reg_lambda: 0.894_736_842_105_263,
            colsample_bytree: 0.693_333_333_333_333_2,
            max_depth: None,
            goss_enabled: false,
            goss_top_rate: 0.2,
            goss_other_rate: 0.1,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !unit(self.learning_rate) || !unit(self.colsample_bytree) {
            return fail("learning_rate and colsample_bytree must be in (0, 1]");
        }
        if self.goss_enabled
            && (!unit(self.goss_top_rate)
                || !unit(self.goss_other_rate)
                || self.goss_top_rate + self.goss_other_rate > 1.0)
        {
            return fail("GOSS rates must be in (0, 1] and sum to at most 1");
        }
        if self.num_leaves < 2 {
            return fail("num_leaves must be at least 2");
        }
        if !(2..=256).contains(&self.max_bin) {
            return fail("max_bin must be in 2..=256");
        }
        if self.min_child_weight < 0.0 || self.min_split_gain < 0.0 || self.reg_alpha < 0.0 || self.reg_lambda < 0.0 {
            return fail("penalties and minimums must be non-negative");
        }
        if self.max_depth == Some(0) {
            return fail("max_depth must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` (equivalently bin code `<= bin`)
    /// go left.
    Split {
        feature: u32,
        bin: u8,
        threshold: f64,
        gain: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Tree {
        Tree { nodes }
    }

    /// Renumbers nodes so that they are stored in preorder.
    pub fn into_preorder(self) -> Tree {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = alloc::vec![(0usize, None::<(usize, bool)>)];
        while let Some((old, parent)) = stack.pop() {
            let new = out.len();
            if let Some((p, is_left)) = parent {
                if let Node::Split { left, right, .. } = &mut out[p] {
                    if is_left {
                        *left = new as u32;
                    } else {
                        *right = new as u32;
                    }
                }
            }
            let node = self.nodes[old];
            out.push(node);
            if let Node::Split { left, right, .. } = node {
                stack.push((right as usize, Some((new, false))));
                stack.push((left as usize, Some((new, true))));
            }
        }
        Tree { nodes: out }
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    #[inline]
    fn predict_binned(&self, binned: &BinnedMatrix, row: usize) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => {
                    i = if binned.get(row, feature as usize) <= bin {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// A fitted boosted ensemble: `trees[class][round]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub config: GbdtConfig,
    pub n_features: usize,
    pub n_classes: usize,
    pub bin_edges: Vec<Vec<f64>>,
    pub trees: Vec<Vec<Tree>>,
    /// Set when training saw a single class; that class always wins.
    pub constant_class: Option<usize>,
}

impl TreeModel {
    /// Raw additive scores, one per class.
    pub fn raw_scores(&self, row: &[f64], out: &mut [f64]) {
        for (c, trees) in self.trees.iter().enumerate() {
            out[c] = trees.iter().map(|t| t.predict(row)).sum();
        }
    }

    /// Number of boosting rounds actually stored.
    pub fn rounds(&self) -> usize {
        self.trees.first().map_or(0, Vec::len)
    }
}

impl Classifier for TreeModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        classifier::check_width(x, self.n_features)?;
        x.check_finite()?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            match self.constant_class {
                Some(c) => row[c] = 1.0,
                None => {
                    self.raw_scores(x.row(i), row);
                    classifier::softmax(row);
                }
            }
        }
        Ok(out)
    }
}

/// Fraction of splits and of total split gain attributed to each feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Importance {
    pub split_fraction: Vec<f64>,
    pub gain_fraction: Vec<f64>,
}

/// Models that can attribute their decisions to input features.
pub trait Explain {
    fn feature_importance(&self) -> Result<Importance>;
}

impl Explain for TreeModel {
    fn feature_importance(&self) -> Result<Importance> {
        let mut splits = alloc::vec![0.0; self.n_features];
        let mut gains = alloc::vec![0.0; self.n_features];
        for tree in self.trees.iter().flatten() {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    splits[*feature as usize] += 1.0;
                    gains[*feature as usize] += gain;
                }
            }
        }
        let total_splits: f64 = splits.iter().sum();
        let total_gain: f64 = gains.iter().sum();
        if total_splits == 0.0 || total_gain <= 0.0 {
            return Err(Error::Untrained);
        }
        splits.iter_mut().for_each(|s| *s /= total_splits);
        gains.iter_mut().for_each(|g| *g /= total_gain);
        Ok(Importance {
            split_fraction: splits,
            gain_fraction: gains,
        })
    }
}

/// Training multiclass log-loss after each round, starting with the loss of
/// the empty ensemble.
pub type LossHistory = Vec<f64>;

fn mean_log_loss(scores: &[f64], y: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    let mut p = alloc::vec![0.0; k];
    for (i, &label) in y.iter().enumerate() {
        p.copy_from_slice(&scores[i * k..(i + 1) * k]);
        classifier::softmax(&mut p);
        total -= math::ln(p[label].max(1e-300));
    }
    total / y.len() as f64
}

/// Rows for one tree under GOSS: the largest `top_rate` share by |gradient|
/// at weight 1, plus an `other_rate` share of the rest drawn uniformly and
/// reweighted by `(1 - top_rate) / other_rate`. Returns sorted rows and the
/// per-row weight (zero for rows left out).
fn goss_rows(grad: &[f64], cfg: &GbdtConfig, rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<f64>) {
    let n = grad.len();
    let top = ((cfg.goss_top_rate * n as f64) as usize).min(n);
    let other = ((cfg.goss_other_rate * n as f64) as usize).min(n - top);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|a, b| {
        math::abs(grad[*b as usize])
            .total_cmp(&math::abs(grad[*a as usize]))
            .then(a.cmp(b))
    });
    let mut weight = alloc::vec![0.0; n];
    for &i in &order[..top] {
        weight[i as usize] = 1.0;
    }
    let rest = &order[top..];
    let amplify = (1.0 - cfg.goss_top_rate) / cfg.goss_other_rate;
    for j in rand::seq::index::sample(rng, rest.len(), other).iter() {
        weight[rest[j] as usize] = amplify;
    }
    let rows = (0..n as u32).filter(|&i| weight[i as usize] > 0.0).collect();
    (rows, weight)
}

/// Boosted-tree trainer implementing the base-classifier contract.
#[derive(Debug, Clone, Default)]
pub struct GbdtTrainer {
    pub config: GbdtConfig,
}

impl GbdtTrainer {
    pub fn new(config: GbdtConfig) -> Self {
        GbdtTrainer { config }
    }

    /// Fits and also returns the per-round training log-loss.
    pub fn fit_monitored(&self, x: &Matrix, y: &[usize], n_classes: usize) -> Result<(TreeModel, LossHistory)> {
        let cfg = &self.config;
        cfg.validate()?;
        classifier::check_training_input(x, y, n_classes)?;
        if x.rows() < cfg.min_data_in_leaf.max(1) {
            return Err(Error::TooFewRows {
                needed: cfg.min_data_in_leaf.max(1),
                got: x.rows(),
            });
        }
        let n = x.rows();
        let k = n_classes;
        let mut model = TreeModel {
            config: cfg.clone(),
            n_features: x.cols(),
            n_classes: k,
            bin_edges: Vec::new(),
            trees: alloc::vec![Vec::new(); k],
            constant_class: None,
        };

        let first = y[0];
        if y.iter().all(|&l| l == first) {
            log::warn!("boosting on a single class ({first}); the model always predicts it");
            model.constant_class = Some(first);
            return Ok((model, alloc::vec![0.0]));
        }

        let mapper = BinMapper::fit(x, cfg.max_bin);
        let binned = mapper.bin_matrix(x);
        let n_sampled = ((cfg.colsample_bytree * x.cols() as f64 + 0.5) as usize).clamp(1, x.cols());
        let hess_factor = k as f64 / (k as f64 - 1.0);

        let mut scores = alloc::vec![0.0; n * k];
        let mut losses = alloc::vec![mean_log_loss(&scores, y, k)];
        let mut grad = alloc::vec![alloc::vec![0.0; n]; k];
        let mut hess = alloc::vec![alloc::vec![0.0; n]; k];
        let mut p = alloc::vec![0.0; k];
        let classes: Vec<usize> = (0..k).collect();

        for round in 0..cfg.n_estimators {
            for i in 0..n {
                p.copy_from_slice(&scores[i * k..(i + 1) * k]);
                classifier::softmax(&mut p);
                for c in 0..k {
                    let target = if y[i] == c { 1.0 } else { 0.0 };
                    grad[c][i] = p[c] - target;
                    hess[c][i] = (hess_factor * p[c] * (1.0 - p[c])).max(1e-16);
                }
            }

            let trees: Vec<Tree> = par::map(&classes, |&c| {
                let mut rng = ChaCha8Rng::seed_from_u64(math::mix_seed(cfg.seed, round as u64, c as u64));
                let mut features = rand::seq::index::sample(&mut rng, x.cols(), n_sampled).into_vec();
                features.sort_unstable();
                let grower = |rows: Vec<u32>, g: &[f64], h: &[f64]| {
                    grow::Grower {
                        binned: &binned,
                        mapper: &mapper,
                        cfg,
                        features: &features,
                        grad: g,
                        hess: h,
                    }
                    .grow(rows)
                };
                if cfg.goss_enabled {
                    let (rows, w) = goss_rows(&grad[c], cfg, &mut rng);
                    let g: Vec<f64> = grad[c].iter().zip(&w).map(|(a, b)| a * b).collect();
                    let h: Vec<f64> = hess[c].iter().zip(&w).map(|(a, b)| a * b).collect();
                    grower(rows, &g, &h)
                } else {
                    grower((0..n as u32).collect(), &grad[c], &hess[c])
                }
            });

            for (c, tree) in trees.into_iter().enumerate() {
                for i in 0..n {
                    scores[i * k + c] += tree.predict_binned(&binned, i);
                }
                model.trees[c].push(tree);
            }
            losses.push(mean_log_loss(&scores, y, k));
        }
        model.bin_edges = mapper.edges;
        Ok((model, losses))
    }
}

impl Trainer for GbdtTrainer {
    type Model = TreeModel;

    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<TreeModel> {
        let mut t = self.clone();
        t.config.seed = math::mix_seed(self.config.seed, seed, 0x6bd7);
        t.fit_monitored(x, y, n_classes).map(|(m, _)| m)
    }
}

/// Fits a boosted ensemble with the configured seed.
pub fn fit_gbdt(x: &Matrix, y: &[usize], n_classes: usize, config: &GbdtConfig) -> Result<TreeModel> {
    GbdtTrainer::new(config.clone()).fit_monitored(x, y, n_classes).map(|(m, _)| m)
}

#[cfg(test)]
mod tests;

//! Three-layer identification ensemble.
//!
//! Layers 1 and 2 each split the user set into groups with one classifier per
//! group. Their concatenated probability maps are fused by log-sum. Users the
//! fused model confuses on the clustering split are linked in a graph; each
//! connected component gets a dedicated layer-3 classifier that refines
//! predictions landing inside it.

mod graph;
mod partition;

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use graph::{connected_components, ConfusionGraph};
pub use partition::{bisect, partition_users};

use crate::classifier::{Classifier, Trainer};
use crate::error::{Error, Result};
use crate::math::{self, mix_seed};
use crate::matrix::{Dataset, Matrix};
use crate::par;
use crate::replay::UserId;

pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    /// Groups per layer.
    pub n_groups: usize,
    pub seed: u64,
    /// Added inside every logarithm.
    pub epsilon: f64,
    /// Largest class count for a layer-3 model.
    pub max_component_size: usize,
    /// Confused users linked per misclassified presentation.
    pub similar_users: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            n_groups: 10,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            max_component_size: 5500,
            similar_users: 5,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.max_component_size < 2 || !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(
                "n_groups >= 1, max_component_size >= 2 and epsilon >= 0 are required".to_string(),
            ));
        }
        Ok(())
    }

    /// Seed of the model for `group` of `layer` (3 for components).
    pub fn model_seed(&self, layer: u8, group: usize) -> u64 {
        mix_seed(self.seed, layer as u64, group as u64)
    }
}

/// Groups of one partitioned layer. Class `c` of `models[g]` is user
/// `groups[g][c]`.
#[derive(Debug, Clone)]
pub struct Layer<M> {
    pub index: u8,
    pub groups: Vec<Vec<usize>>,
    pub models: Vec<Arc<M>>,
}

impl<M: Classifier> Layer<M> {
    /// Per-user probabilities for each row: every group model's output
    /// written into the columns of its members, without renormalization.
    pub fn predict(&self, x: &Matrix, n_users: usize) -> Result<Matrix> {
        let idx: Vec<usize> = (0..self.models.len()).collect();
        let outs = par::map(&idx, |&g| self.models[g].predict_proba(x));
        let mut map = Matrix::zeros(x.rows(), n_users);
        for (g, out) in outs.into_iter().enumerate() {
            let p = out.map_err(|e| Error::GroupFailed {
                layer: self.index,
                group: g,
                source: alloc::boxed::Box::new(e),
            })?;
            for i in 0..x.rows() {
                let row = map.row_mut(i);
                for (c, &u) in self.groups[g].iter().enumerate() {
                    row[u] = p.get(i, c);
                }
            }
        }
        Ok(map)
    }

    /// Group holding `user`.
    pub fn group_of(&self, user: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.binary_search(&user).is_ok())
    }
}

/// A layer-3 model over one confusion component.
#[derive(Debug, Clone)]
pub struct Component<M> {
    pub members: Vec<usize>,
    pub model: Arc<M>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Layer1,
    TwoLayer,
    Full,
}

/// Per-sample log scores: `layer1 = ln(p1 + eps)` and
/// `fused = ln(p1 + eps) + ln(p2 + eps)`, one column per user.
#[derive(Debug, Clone)]
pub struct SampleScores {
    pub layer1: Matrix,
    pub fused: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    /// Users best first with their aggregated score under the chosen mode.
    pub ranking: Vec<(usize, f64)>,
    /// Argmax before refinement.
    pub initial: usize,
    /// Index into `components` when layer 3 was consulted.
    pub component: Option<usize>,
}

impl Identification {
    pub fn predicted(&self) -> usize {
        self.ranking[0].0
    }

    /// 1-based rank of `user`.
    pub fn rank_of(&self, user: usize) -> Option<usize> {
        self.ranking.iter().position(|(u, _)| *u == user).map(|p| p + 1)
    }
}

/// Fuses two probability maps by log-sum. Keys must agree.
pub fn fuse_layers(
    map1: &BTreeMap<UserId, f64>,
    map2: &BTreeMap<UserId, f64>,
    epsilon: f64,
) -> Result<BTreeMap<UserId, f64>> {
    if map1.len() != map2.len() || map1.keys().zip(map2.keys()).any(|(a, b)| a != b) {
        return Err(Error::KeyMismatch);
    }
    Ok(map1
        .iter()
        .zip(map2.values())
        .map(|((u, a), b)| (u.clone(), math::ln(a + epsilon) + math::ln(b + epsilon)))
        .collect())
}

/// Highest-scoring key; ties go to the smallest key.
pub fn argmax_map(scores: &BTreeMap<UserId, f64>) -> Option<&UserId> {
    let mut best: Option<(&UserId, f64)> = None;
    for (u, &s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((u, s));
        }
    }
    best.map(|(u, _)| u)
}

/// Orders `candidates` by descending score, breaking ties by smaller user id.
fn rank(candidates: impl Iterator<Item = usize>, scores: &[f64], users: &[UserId]) -> Vec<(usize, f64)> {
    let mut r: Vec<(usize, f64)> = candidates.map(|u| (u, scores[u])).collect();
    r.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| users[a.0].cmp(&users[b.0])));
    r
}

fn column_sums(m: &Matrix, rows: &[usize]) -> Vec<f64> {
    let mut s = alloc::vec![0.0; m.cols()];
    for &i in rows {
        for (a, v) in s.iter_mut().zip(m.row(i)) {
            *a += v;
        }
    }
    s
}

/// Rows of `data` whose user is in `members`, relabeled to positions in
/// `members` (which must be sorted).
fn subset(data: &Dataset, members: &[usize]) -> (Matrix, Vec<usize>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (i, l) in data.labels.iter().enumerate() {
        if let Ok(pos) = members.binary_search(l) {
            rows.push(i);
            y.push(pos);
        }
    }
    (data.x.select_rows(&rows), y)
}

#[derive(Debug, Clone)]
pub struct HierarchicalModel<M> {
    /// Column order of every score map. Sorted at training time; users added
    /// later are appended.
    pub users: Vec<UserId>,
    pub config: HierarchyConfig,
    pub n_features: usize,
    pub layers: [Layer<M>; 2],
    pub components: Vec<Component<M>>,
    /// Set by [`HierarchicalModel::add_user`]; stale components are ignored
    /// until [`HierarchicalModel::rebuild_layer3`] runs.
    pub components_stale: bool,
}

fn train_layer<T: Trainer>(
    trainer: &T,
    data: &Dataset,
    groups: Vec<Vec<usize>>,
    layer: u8,
    cfg: &HierarchyConfig,
) -> Result<Layer<T::Model>> {
    let idx: Vec<usize> = (0..groups.len()).collect();
    let fits = par::map(&idx, |&g| {
        let (x, y) = subset(data, &groups[g]);
        trainer.fit(&x, &y, groups[g].len(), cfg.model_seed(layer, g))
    });
    let mut models = Vec::with_capacity(groups.len());
    for (g, f) in fits.into_iter().enumerate() {
        models.push(Arc::new(f.map_err(|e| Error::GroupFailed {
            layer,
            group: g,
            source: alloc::boxed::Box::new(e),
        })?));
    }
    Ok(Layer {
        index: layer,
        groups,
        models,
    })
}

/// Trains layers 1 and 2 on `train`, then builds layer 3 from the clustering
/// split. Both datasets must share the same sorted user list.
pub fn train_hierarchy<T: Trainer>(
    trainer: &T,
    train: &Dataset,
    cluster: &Dataset,
    config: &HierarchyConfig,
) -> Result<HierarchicalModel<T::Model>> {
    config.validate()?;
    if cluster.users != train.users || !train.users.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::KeyMismatch);
    }
    let n = train.users.len();
    if let Some(u) = train.rows_by_user().iter().position(Vec::is_empty) {
        return Err(Error::NoSamples(train.users[u].to_string()));
    }
    let l1 = partition_users(n, config.n_groups, config.seed, 1)?;
    let l2 = partition_users(n, config.n_groups, config.seed, 2)?;
    let layer1 = train_layer(trainer, train, l1, 1, config)?;
    let layer2 = train_layer(trainer, train, l2, 2, config)?;
    let mut model = HierarchicalModel {
        users: train.users.clone(),
        config: config.clone(),
        n_features: train.x.cols(),
        layers: [layer1, layer2],
        components: Vec::new(),
        components_stale: false,
    };
    model.rebuild_layer3(trainer, train, cluster)?;
    Ok(model)
}

impl<M: Classifier> HierarchicalModel<M> {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Number of group models (layers 1 and 2) plus layer-3 models.
    pub fn n_models(&self) -> usize {
        self.layers[0].models.len() + self.layers[1].models.len() + self.components.len()
    }

    pub fn sample_scores(&self, x: &Matrix) -> Result<SampleScores> {
        if x.cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.cols(),
            });
        }
        let eps = self.config.epsilon;
        let n = self.n_users();
        let mut layer1 = self.layers[0].predict(x, n)?;
        let mut fused = self.layers[1].predict(x, n)?;
        for (a, b) in layer1.as_mut_slice().iter_mut().zip(fused.as_mut_slice()) {
            *a = math::ln(*a + eps);
            *b = *a + math::ln(*b + eps);
        }
        Ok(SampleScores { layer1, fused })
    }

    /// Identifies one presentation made of `rows` of `x`, whose per-sample
    /// scores are `scores`.
    pub fn decide(&self, scores: &SampleScores, x: &Matrix, rows: &[usize], mode: Mode) -> Result<Identification> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("presentation has no samples"));
        }
        let n = self.n_users();
        let agg = match mode {
            Mode::Layer1 => column_sums(&scores.layer1, rows),
            _ => column_sums(&scores.fused, rows),
        };
        let ranking = rank(0..n, &agg, &self.users);
        let initial = ranking[0].0;
        if mode != Mode::Full || self.components_stale {
            return Ok(Identification {
                ranking,
                initial,
                component: None,
            });
        }
        let Some(ci) = self
            .components
            .iter()
            .position(|c| c.members.binary_search(&initial).is_ok())
        else {
            return Ok(Identification {
                ranking,
                initial,
                component: None,
            });
        };
        let comp = &self.components[ci];
        let p = comp.model.predict_proba(&x.select_rows(rows))?;
        let mut local = alloc::vec![0.0; comp.members.len()];
        for i in 0..p.rows() {
            for (s, v) in local.iter_mut().zip(p.row(i)) {
                *s += math::ln(v + self.config.epsilon);
            }
        }
        let mut best = 0;
        for c in 1..local.len() {
            let (u, b) = (comp.members[c], comp.members[best]);
            if local[c] > local[best] || (local[c] == local[best] && self.users[u] < self.users[b]) {
                best = c;
            }
        }
        let winner = comp.members[best];
        let mut out = Vec::with_capacity(n);
        out.push((winner, agg[winner]));
        out.extend(ranking.into_iter().filter(|(u, _)| *u != winner));
        Ok(Identification {
            ranking: out,
            initial,
            component: Some(ci),
        })
    }

    /// Identifies the user behind all rows of `x`.
    pub fn identify(&self, x: &Matrix, mode: Mode) -> Result<Identification> {
        let scores = self.sample_scores(x)?;
        let rows: Vec<usize> = (0..x.rows()).collect();
        self.decide(&scores, x, &rows, mode)
    }

    /// Links every misidentified clustering presentation (one per user and
    /// session) to the users it was confused with.
    pub fn confusion_graph(&self, cluster: &Dataset) -> Result<ConfusionGraph> {
        let mut graph = ConfusionGraph::new(self.n_users());
        if cluster.is_empty() {
            log::warn!("clustering split is empty; layer 3 will have no models");
            return Ok(graph);
        }
        let mut presentations: BTreeMap<(usize, u32), Vec<usize>> = BTreeMap::new();
        for (i, (&l, &s)) in cluster.labels.iter().zip(&cluster.sessions).enumerate() {
            presentations.entry((l, s)).or_default().push(i);
        }
        let scores = self.sample_scores(&cluster.x)?;
        for (&(truth, _), rows) in &presentations {
            let id = self.decide(&scores, &cluster.x, rows, Mode::TwoLayer)?;
            if id.predicted() == truth {
                continue;
            }
            for &(u, _) in id.ranking.iter().filter(|(u, _)| *u != truth).take(self.config.similar_users) {
                graph.add_edge(truth, u);
            }
        }
        Ok(graph)
    }

    /// Rebuilds the confusion graph and retrains all layer-3 models.
    pub fn rebuild_layer3<T: Trainer<Model = M>>(&mut self, trainer: &T, train: &Dataset, cluster: &Dataset) -> Result<()> {
        if train.users != self.users || cluster.users != self.users {
            return Err(Error::KeyMismatch);
        }
        self.components_stale = false;
        let graph = self.confusion_graph(cluster)?;
        let mut parts = Vec::new();
        for (i, c) in graph.components().into_iter().enumerate() {
            let seed = mix_seed(self.config.seed, 0xb15e, i as u64);
            parts.extend(bisect(&c, self.config.max_component_size, seed));
        }
        parts.sort_by_key(|c| c[0]);
        let idx: Vec<usize> = (0..parts.len()).collect();
        let fits = par::map(&idx, |&i| {
            let (x, y) = subset(train, &parts[i]);
            trainer.fit(&x, &y, parts[i].len(), self.config.model_seed(3, i))
        });
        let mut components = Vec::with_capacity(parts.len());
        for (i, (members, f)) in parts.into_iter().zip(fits).enumerate() {
            let model = f.map_err(|e| Error::GroupFailed {
                layer: 3,
                group: i,
                source: alloc::boxed::Box::new(e),
            })?;
            components.push(Component {
                members,
                model: Arc::new(model),
            });
        }
        self.components = components;
        Ok(())
    }

    /// Adds a user to the smallest group of each layer and retrains exactly
    /// those two models. `train` is the training data the model was built
    /// from (over the current user list); `rows` are the new user's samples.
    /// Returns the retrained group of each layer. Layer 3 becomes stale.
    pub fn add_user<T: Trainer<Model = M>>(
        &mut self,
        trainer: &T,
        train: &Dataset,
        user: UserId,
        rows: &Matrix,
    ) -> Result<[usize; 2]> {
        if self.users.contains(&user) {
            return Err(Error::DuplicateUser(user.to_string()));
        }
        if train.users != self.users {
            return Err(Error::KeyMismatch);
        }
        if rows.rows() == 0 {
            return Err(Error::NoSamples(user.to_string()));
        }
        if rows.cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: rows.cols(),
            });
        }
        let new = self.users.len();
        let mut targets = [0usize; 2];
        let mut models = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let g = (0..layer.groups.len())
                .min_by_key(|&g| (layer.groups[g].len(), g))
                .expect("layer has groups");
            let mut members = layer.groups[g].clone();
            members.push(new);
            let (mut x, mut y) = subset(train, &layer.groups[g]);
            for i in 0..rows.rows() {
                x.push_row(rows.row(i))?;
                y.push(members.len() - 1);
            }
            let model = trainer
                .fit(&x, &y, members.len(), self.config.model_seed(layer.index, g))
                .map_err(|e| Error::GroupFailed {
                    layer: layer.index,
                    group: g,
                    source: alloc::boxed::Box::new(e),
                })?;
            targets[li] = g;
            models.push((members, model));
        }
        for ((layer, &g), (members, model)) in self.layers.iter_mut().zip(&targets).zip(models) {
            layer.groups[g] = members;
            layer.models[g] = Arc::new(model);
        }
        self.users.push(user);
        self.components_stale = true;
        Ok(targets)
    }
}

#[cfg(test)]
mod tests;

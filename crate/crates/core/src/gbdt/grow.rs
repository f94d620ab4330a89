//! Leaf-wise growth of one regression tree on gradient histograms.

use alloc::vec::Vec;

use super::binning::{BinMapper, BinnedMatrix};
use super::{GbdtConfig, Node, Tree};

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    /// Position in the sampled feature list.
    slot: usize,
    bin: u8,
    gain: f64,
    left_g: f64,
    left_h: f64,
    left_n: u32,
}

struct Leaf {
    start: usize,
    end: usize,
    g: f64,
    h: f64,
    n: u32,
    depth: usize,
    node: usize,
    hist: Option<Vec<Bin>>,
    best: Option<SplitCandidate>,
}

pub(super) struct Grower<'a> {
    pub binned: &'a BinnedMatrix,
    pub mapper: &'a BinMapper,
    pub cfg: &'a GbdtConfig,
    /// Feature indices this tree may split on, ascending.
    pub features: &'a [usize],
    pub grad: &'a [f64],
    pub hess: &'a [f64],
}

#[inline]
fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.cfg.reg_alpha);
        t * t / (h + self.cfg.reg_lambda)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.cfg.learning_rate * soft_threshold(g, self.cfg.reg_alpha) / (h + self.cfg.reg_lambda)
    }

    fn offsets(&self) -> (Vec<usize>, usize) {
        let mut off = Vec::with_capacity(self.features.len() + 1);
        let mut total = 0;
        for &f in self.features {
            off.push(total);
            total += self.mapper.n_bins(f);
        }
        off.push(total);
        (off, total)
    }

    fn build_hist(&self, rows: &[u32], offsets: &[usize], hist: &mut [Bin]) {
        hist.iter_mut().for_each(|b| *b = Bin::default());
        let g: Vec<f64> = rows.iter().map(|&i| self.grad[i as usize]).collect();
        let h: Vec<f64> = rows.iter().map(|&i| self.hess[i as usize]).collect();
        for (slot, &f) in self.features.iter().enumerate() {
            let col = self.binned.column(f);
            let hf = &mut hist[offsets[slot]..offsets[slot + 1]];
            if hf.len() < 2 {
                continue;
            }
            for ((&i, gi), hi) in rows.iter().zip(&g).zip(&h) {
                let b = &mut hf[col[i as usize] as usize];
                b.g += gi;
                b.h += hi;
                b.n += 1;
            }
        }
    }

    fn best_split(&self, leaf: &Leaf, offsets: &[usize]) -> Option<SplitCandidate> {
        let hist = leaf.hist.as_ref()?;
        if let Some(max_depth) = self.cfg.max_depth {
            if leaf.depth >= max_depth {
                return None;
            }
        }
        let min_n = self.cfg.min_data_in_leaf as u32;
        if leaf.n < 2 * min_n.max(1) {
            return None;
        }
        let parent = self.score(leaf.g, leaf.h);
        let mut best: Option<SplitCandidate> = None;
        for slot in 0..self.features.len() {
            let hf = &hist[offsets[slot]..offsets[slot + 1]];
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0u32);
            for (b, bin) in hf.iter().enumerate().take(hf.len().saturating_sub(1)) {
                gl += bin.g;
                hl += bin.h;
                nl += bin.n;
                if nl < min_n || bin.n == 0 && nl == 0 {
                    continue;
                }
                let nr = leaf.n - nl;
                if nr < min_n || nr == 0 {
                    break;
                }
                let (gr, hr) = (leaf.g - gl, leaf.h - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if best.is_none_or(|c| gain > c.gain) {
                    best = Some(SplitCandidate {
                        slot,
                        bin: b as u8,
                        gain,
                        left_g: gl,
                        left_h: hl,
                        left_n: nl,
                    });
                }
            }
        }
        best.filter(|c| c.gain > 0.0 && c.gain >= self.cfg.min_split_gain)
    }

    /// Grows one tree over `rows` (indices into the binned matrix).
    pub fn grow(&self, mut rows: Vec<u32>) -> Tree {
        let (offsets, total_bins) = self.offsets();
        let mut pool: Vec<Vec<Bin>> = Vec::new();
        let take = |pool: &mut Vec<Vec<Bin>>| pool.pop().unwrap_or_else(|| alloc::vec![Bin::default(); total_bins]);

        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i as usize], h + self.hess[i as usize])
        });
        let mut root_hist = take(&mut pool);
        self.build_hist(&rows, &offsets, &mut root_hist);
        let mut root = Leaf {
            start: 0,
            end: rows.len(),
            g,
            h,
            n: rows.len() as u32,
            depth: 0,
            node: 0,
            hist: Some(root_hist),
            best: None,
        };
        root.best = self.best_split(&root, &offsets);

        let mut nodes: Vec<Node> = alloc::vec![Node::Leaf { value: 0.0 }];
        let mut leaves: Vec<Leaf> = alloc::vec![root];
        let mut scratch: Vec<u32> = Vec::with_capacity(rows.len());

        while leaves.len() < self.cfg.num_leaves {
            let mut pick: Option<usize> = None;
            for (i, l) in leaves.iter().enumerate() {
                if let Some(c) = l.best {
                    if pick.is_none_or(|p| c.gain > leaves[p].best.map_or(f64::NEG_INFINITY, |b| b.gain)) {
                        pick = Some(i);
                    }
                }
            }
            let Some(pi) = pick else { break };
            let parent = leaves.swap_remove(pi);
            let split = parent.best.expect("picked leaf has a split");
            let feature = self.features[split.slot];

            // Stable partition of the parent's rows.
            let col = self.binned.column(feature);
            let seg = &mut rows[parent.start..parent.end];
            scratch.clear();
            let mut w = 0;
            for k in 0..seg.len() {
                let r = seg[k];
                if col[r as usize] <= split.bin {
                    seg[w] = r;
                    w += 1;
                } else {
                    scratch.push(r);
                }
            }
            seg[w..].copy_from_slice(&scratch);
            let mid = parent.start + w;
            debug_assert_eq!(w as u32, split.left_n);

            let left_idx = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[parent.node] = Node::Split {
                feature: feature as u32,
                bin: split.bin,
                threshold: self.mapper.edges[feature][split.bin as usize],
                gain: split.gain,
                left: left_idx as u32,
                right: left_idx as u32 + 1,
            };

            let mut left = Leaf {
                start: parent.start,
                end: mid,
                g: split.left_g,
                h: split.left_h,
                n: split.left_n,
                depth: parent.depth + 1,
                node: left_idx,
                hist: None,
                best: None,
            };
            let mut right = Leaf {
                start: mid,
                end: parent.end,
                g: parent.g - split.left_g,
                h: parent.h - split.left_h,
                n: parent.n - split.left_n,
                depth: parent.depth + 1,
                node: left_idx + 1,
                hist: None,
                best: None,
            };

            // Children can only be split further if the tree has room for
            // more leaves; skip their histograms otherwise.
            if leaves.len() + 2 < self.cfg.num_leaves {
                let mut parent_hist = parent.hist.expect("split leaf has a histogram");
                let mut small_hist = take(&mut pool);
                let left_smaller = left.n <= right.n;
                let small = if left_smaller { &left } else { &right };
                self.build_hist(&rows[small.start..small.end], &offsets, &mut small_hist);
                for (p, s) in parent_hist.iter_mut().zip(&small_hist) {
                    p.g -= s.g;
                    p.h -= s.h;
                    p.n -= s.n;
                }
                if left_smaller {
                    left.hist = Some(small_hist);
                    right.hist = Some(parent_hist);
                } else {
                    left.hist = Some(parent_hist);
                    right.hist = Some(small_hist);
                }
                left.best = self.best_split(&left, &offsets);
                right.best = self.best_split(&right, &offsets);
                for l in [&mut left, &mut right] {
                    if l.best.is_none() {
                        if let Some(hh) = l.hist.take() {
                            pool.push(hh);
                        }
                    }
                }
            } else if let Some(hh) = parent.hist {
                pool.push(hh);
            }
            leaves.push(left);
            leaves.push(right);
        }

        for l in &leaves {
            nodes[l.node] = Node::Leaf {
                value: self.leaf_value(l.g, l.h),
            };
        }
        Tree::from_nodes(nodes).into_preorder()
    }
}

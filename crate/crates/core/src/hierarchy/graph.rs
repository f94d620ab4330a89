//! Confusion graph over user indices and its connected components.

use alloc::vec::Vec;

/// Undirected multigraph on `0..n_nodes`. Self-loops are never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfusionGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ConfusionGraph {
    pub fn new(n_nodes: usize) -> Self {
        ConfusionGraph {
            n_nodes,
            edges: Vec::new(),
        }
    }

    /// Adds an edge; ignores self-loops. Returns whether it was stored.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        assert!(a < self.n_nodes && b < self.n_nodes, "edge endpoint out of range");
        if a == b {
            return false;
        }
        self.edges.push((a.min(b), a.max(b)));
        true
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        connected_components(self.n_nodes, &self.edges)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: alloc::vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            core::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Components with more than one node. Members are ascending and components
/// are ordered by their smallest member.
pub fn connected_components(n_nodes: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(n_nodes);
    for &(a, b) in edges {
        uf.union(a, b);
    }
    let mut by_root: Vec<Vec<usize>> = alloc::vec![Vec::new(); n_nodes];
    for v in 0..n_nodes {
        let r = uf.find(v);
        by_root[r].push(v);
    }
    let mut out: Vec<Vec<usize>> = by_root.into_iter().filter(|c| c.len() > 1).collect();
    out.sort_by_key(|c| c[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        assert!(connected_components(3, &[]).is_empty());
        assert_eq!(connected_components(3, &[(0, 1)]), [[0, 1]]);
        assert_eq!(connected_components(4, &[(2, 1), (0, 2)]), [[0, 1, 2]]);
        let mut g = ConfusionGraph::new(5);
        assert!(!g.add_edge(3, 3));
        g.add_edge(4, 3);
        g.add_edge(3, 4);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.components(), [[3, 4]]);
    }
}

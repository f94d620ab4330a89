//! Quantile feature binning.

use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Upper bin edges per feature. A value `v` falls in bin
/// `#{edges e : e < v}`, so bin `b` holds `edges[b-1] < v <= edges[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    pub edges: Vec<Vec<f64>>,
}

impl BinMapper {
    /// Quantile edges computed once from the training matrix, at most
    /// `max_bin` bins per feature. Edges sit halfway between the two
    /// neighbouring distinct training values.
    pub fn fit(x: &Matrix, max_bin: usize) -> BinMapper {
        let mut edges = Vec::with_capacity(x.cols());
        let mut col: Vec<f64> = Vec::with_capacity(x.rows());
        for j in 0..x.cols() {
            col.clear();
            col.extend(x.column(j));
            col.sort_unstable_by(f64::total_cmp);
            edges.push(feature_edges(&col, max_bin));
        }
        BinMapper { edges }
    }

    #[inline]
    pub fn bin(&self, feature: usize, v: f64) -> u8 {
        self.edges[feature].partition_point(|e| *e < v) as u8
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    /// Column-major bin codes.
    pub fn bin_matrix(&self, x: &Matrix) -> BinnedMatrix {
        let n = x.rows();
        let mut codes = alloc::vec![0u8; n * x.cols()];
        for j in 0..x.cols() {
            let col = &mut codes[j * n..(j + 1) * n];
            for (i, c) in col.iter_mut().enumerate() {
                *c = self.bin(j, x.get(i, j));
            }
        }
        BinnedMatrix {
            rows: n,
            cols: x.cols(),
            codes,
        }
    }
}

fn feature_edges(sorted: &[f64], max_bin: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = sorted.to_vec();
    distinct.dedup();
    let mut edges = Vec::new();
    if distinct.len() <= max_bin {
        for w in distinct.windows(2) {
            edges.push(w[0] + (w[1] - w[0]) / 2.0);
        }
        return edges;
    }
    let n = sorted.len();
    for q in 1..max_bin {
        let idx = q * n / max_bin;
        if idx == 0 || idx >= n {
            continue;
        }
        let lower = sorted[idx - 1];
        // First value strictly above `lower`.
        let p = sorted.partition_point(|v| *v <= lower);
        if p >= n {
            continue;
        }
        let e = lower + (sorted[p] - lower) / 2.0;
        if edges.last().is_none_or(|last| e > *last) {
            edges.push(e);
        }
    }
    edges
}

#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub rows: usize,
    pub cols: usize,
    codes: Vec<u8>,
}

impl BinnedMatrix {
    #[inline]
    pub fn column(&self, j: usize) -> &[u8] {
        &self.codes[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.codes[j * self.rows + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_get_midpoint_edges() {
        let x = Matrix::from_rows(1, [[1.0], [3.0], [3.0], [7.0]]).unwrap();
        let m = BinMapper::fit(&x, 63);
        assert_eq!(m.edges[0], [2.0, 5.0]);
        assert_eq!([m.bin(0, 1.0), m.bin(0, 3.0), m.bin(0, 7.0), m.bin(0, 100.0)], [0, 1, 2, 2]);
    }

    #[test]
    fn constant_feature_has_one_bin() {
        let x = Matrix::from_rows(1, [[4.0], [4.0]]).unwrap();
        assert_eq!(BinMapper::fit(&x, 63).n_bins(0), 1);
    }

    #[test]
    fn uniform_data_bins_are_balanced() {
        let n = 10_000;
        // Low-discrepancy stand-in for uniform samples.
        let x = Matrix::from_rows(1, (0..n).map(|i| [((i as f64) * 0.618_033_988_749_894_9) % 1.0])).unwrap();
        let m = BinMapper::fit(&x, 63);
        assert!(m.n_bins(0) <= 63);
        let b = m.bin_matrix(&x);
        let mut counts = alloc::vec![0usize; m.n_bins(0)];
        for i in 0..n {
            counts[b.get(i, 0) as usize] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(*hi <= 3 * *lo, "{counts:?}");
    }
}

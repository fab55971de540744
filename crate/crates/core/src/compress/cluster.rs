use nalgebra::DMatrix;

use super::{cut_rank, resolve_ranks, top_left_singular, validate_blocks, LeftSweep, Ranks};
use crate::basis::FeatureBlock;
use crate::error::Result;
use crate::tt::TensorTrain;

/// All multi-indices over `len` modes of size `n` with exactly `k`
/// non-constant entries (0-based levels, level 0 the constant).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterIndexSet {
    pub k: usize,
    pub len: usize,
    pub n: usize,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl ClusterIndexSet {
    pub fn new(k: usize, len: usize, n: usize) -> Self {
        Self { k, len, n }
    }

    /// `C(len, k) (n − 1)^k`.
    pub fn cardinality(&self) -> usize {
        binomial(self.len, self.k) * (self.n.saturating_sub(1)).pow(self.k as u32)
    }

    /// Sparse form: `(position, level)` pairs with `level ≥ 1`, positions
    /// in increasing order. Subsets come in lexicographic order, levels
    /// vary fastest in the last position.
    pub fn sparse(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.cardinality());
        if self.k > self.len || (self.k > 0 && self.n < 2) {
            return out;
        }
        let mut subset: Vec<usize> = (0..self.k).collect();
        loop {
            let mut levels = vec![1usize; self.k];
            loop {
                out.push(subset.iter().copied().zip(levels.iter().copied()).collect());
                // next level combination
                let mut p = self.k;
                let mut advanced = false;
                while p > 0 {
                    p -= 1;
                    levels[p] += 1;
                    if levels[p] < self.n {
                        advanced = true;
                        break;
                    }
                    levels[p] = 1;
                }
                if !advanced {
                    break;
                }
            }
            // next subset
            let mut p = self.k;
            let mut advanced = false;
            while p > 0 {
                p -= 1;
                if subset[p] < self.len - self.k + p {
                    subset[p] += 1;
                    for q in p + 1..self.k {
                        subset[q] = subset[q - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
        out
    }

    /// Dense multi-indices of length `len`.
    pub fn dense(&self) -> Vec<Vec<usize>> {
        self.sparse()
            .into_iter()
            .map(|s| {
                let mut l = vec![0; self.len];
                for (p, v) in s {
                    l[p] = v;
                }
                l
            })
            .collect()
    }
}

/// Sketch columns for the suffix `blocks[start..]`: one row per sample, one
/// column per cluster index of order `≤ order`.
fn cluster_sketch(blocks: &[FeatureBlock], start: usize, order: usize) -> DMatrix<f64> {
    let len = blocks.len() - start;
    let n = blocks[start].n();
    let big_n = blocks[start].rows();
    let sets: Vec<Vec<(usize, usize)>> = (0..=order.min(len))
        .flat_map(|k| ClusterIndexSet::new(k, len, n).sparse())
        .collect();
    let mut e = DMatrix::from_element(big_n, sets.len(), 1.0);
    for (c, idx) in sets.iter().enumerate() {
        let mut col = e.column_mut(c);
        for &(p, l) in idx {
            let b = &blocks[start + p];
            for i in 0..big_n {
                col[i] *= b.row(i)[l];
            }
        }
    }
    e
}

/// TT-SVD with the right unfolding sketched onto cluster indices of order
/// at most `order`.
pub fn tt_svd_c(blocks: &[FeatureBlock], ranks: &Ranks, order: usize) -> Result<TensorTrain> {
    let big_n = validate_blocks(blocks)?;
    let sizes: Vec<usize> = blocks.iter().map(|b| b.n()).collect();
    let r = resolve_ranks(&sizes, ranks)?;
    let d = blocks.len();
    let inv = 1.0 / big_n as f64;
    let mut sweep = LeftSweep::new(blocks);
    for j in 0..d - 1 {
        let dm = sweep.d_matrix();
        let e = cluster_sketch(blocks, j + 1, order);
        let b = (&dm * e) * inv;
        let rank = cut_rank(ranks, r[j + 1], b.nrows().min(b.ncols()), j + 1)?;
        let u = top_left_singular(&b, rank, j + 1)?;
        sweep.push(u, &dm)?;
    }
    sweep.finish()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::blocks;
    use super::super::tt_svd_naive;
    use super::*;
    use crate::estimator::dense_coefficients;
    use crate::tt::tt_to_dense;

    #[test]
    fn cardinality_matches_enumeration() {
        for (k, len, n) in [(0, 4, 3), (1, 4, 3), (2, 4, 3), (3, 5, 2), (2, 6, 4), (4, 3, 3)] {
            let s = ClusterIndexSet::new(k, len, n);
            let all = s.dense();
            assert_eq!(all.len(), s.cardinality());
            assert!(all.iter().all(|l| l.iter().filter(|x| **x != 0).count() == k));
            let mut sorted = all.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), all.len());
        }
    }

    #[test]
    fn full_cluster_set_equals_naive() {
        let f = blocks(40, 4, 2, 0.7, 3);
        let exact = dense_coefficients(&f, 1 << 20).unwrap();
        let ranks = Ranks::Explicit(vec![2, 2, 2]);
        let c = tt_svd_c(&f, &ranks, 4).unwrap();
        let naive = tt_svd_naive(&exact, &ranks).unwrap();
        for j in 0..4 {
            for (a, b) in c.core(j).data().iter().zip(naive.core(j).data()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn order_zero_collapses_to_rank_one() {
        let f = blocks(40, 4, 3, 0.7, 3);
        let c = tt_svd_c(&f, &Ranks::Uniform(3), 0).unwrap();
        assert_eq!(c.ranks(), vec![1, 1, 1, 1, 1]);
        assert!(tt_svd_c(&f, &Ranks::Explicit(vec![2, 2, 2]), 0).is_err());
        let t = tt_to_dense(&c).unwrap();
        assert!(t.frobenius_norm() > 0.0);
    }
}

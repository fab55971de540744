use nalgebra::DMatrix;

use super::suffix::SuffixProducts;
use super::{resolve_ranks, top_eigenvectors, validate_blocks, LeftSweep, Ranks};
use crate::basis::FeatureBlock;
use crate::error::{Result, TtdeError};
use crate::tt::TensorTrain;

/// Entry budget for the resident `E_j` products.
const E_STORE_BUDGET: usize = 1 << 28;

fn gram(b: &FeatureBlock) -> DMatrix<f64> {
    let m = b.to_matrix();
    &m * m.transpose()
}

/// `E_j = ⊙_{m>j} Φ_m Φ_mᵀ` for `j = 0..d−1`, in sweep order.
fn right_factors(blocks: &[FeatureBlock], budget: usize) -> Result<SuffixProducts<'_>> {
    let n = blocks[0].rows();
    let per = n.saturating_mul(n);
    if per.saturating_mul(2) > budget {
        return Err(TtdeError::MemoryCap {
            entries: per.saturating_mul(2),
            cap: budget,
        });
    }
    Ok(SuffixProducts::new(blocks.len(), per, budget, false, |m| gram(&blocks[m])))
}

/// TT-SVD of `ĉ` through the Gram matrices `B_j B_jᵀ = D_j E_j D_jᵀ / N²`.
///
/// Produces the same cores as [`super::tt_svd_naive`] on the dense `ĉ`.
pub fn tt_svd_fast(blocks: &[FeatureBlock], ranks: &Ranks) -> Result<TensorTrain> {
    let big_n = validate_blocks(blocks)?;
    let sizes: Vec<usize> = blocks.iter().map(|b| b.n()).collect();
    let r = resolve_ranks(&sizes, ranks)?;
    let d = blocks.len();
    let mut factors = right_factors(blocks, E_STORE_BUDGET)?;
    let inv2 = 1.0 / (big_n as f64 * big_n as f64);
    let mut sweep = LeftSweep::new(blocks);
    for j in 0..d - 1 {
        let dm = sweep.d_matrix();
        let de = factors.with_next(|e| &dm * e).expect("one factor per cut");
        let a = (de * dm.transpose()) * inv2;
        let u = top_eigenvectors(&a, r[j + 1])?;
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
    fn full_rank_reproduces_dense_coefficients() {
        let f = blocks(50, 4, 3, 0.7, 1);
        let exact = dense_coefficients(&f, 1 << 20).unwrap();
        let t = tt_svd_fast(&f, &Ranks::Explicit(vec![3, 9, 3])).unwrap();
        assert!(tt_to_dense(&t).unwrap().rel_distance(&exact) < 1e-10);
    }

    #[test]
    fn truncated_cores_match_naive() {
        let f = blocks(50, 4, 3, 0.7, 2);
        let exact = dense_coefficients(&f, 1 << 20).unwrap();
        let ranks = Ranks::Explicit(vec![2, 2, 2]);
        let fast = tt_svd_fast(&f, &ranks).unwrap();
        let naive = tt_svd_naive(&exact, &ranks).unwrap();
        for j in 0..4 {
            for (a, b) in fast.core(j).data().iter().zip(naive.core(j).data()) {
                assert!((a - b).abs() < 1e-8, "core {j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn single_sample_gives_rank_one_tensor() {
        let f = blocks(1, 3, 4, 0.5, 3);
        let exact = dense_coefficients(&f, 1 << 20).unwrap();
        let t = tt_svd_fast(&f, &Ranks::Uniform(1)).unwrap();
        assert!(tt_to_dense(&t).unwrap().rel_distance(&exact) < 1e-10);
    }
}

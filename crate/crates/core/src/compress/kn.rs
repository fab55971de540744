use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::suffix::SuffixProducts;
use super::{block_gram, resolve_ranks, top_eigenvectors, validate_blocks, LeftSweep, Ranks};
use crate::basis::FeatureBlock;
use crate::error::{Result, TtdeError};
use crate::tt::linalg::pinv_sym;
use crate::tt::TensorTrain;

/// Entry budget for keeping every `M_j` resident.
const M_STORE_BUDGET: usize = 1 << 25;

/// Cross-approximation factors of the implicit `E_j`, sharing one column set.
#[derive(Debug, Clone)]
pub struct NystromFactors {
    /// Sorted sample indices, drawn uniformly without replacement.
    pub indices: Vec<usize>,
    kernels: Vec<FeatureBlock>,
}

impl NystromFactors {
    pub fn new(blocks: &[FeatureBlock], sketch: usize, seed: u64) -> Result<Self> {
        let big_n = validate_blocks(blocks)?;
        if sketch == 0 || sketch > big_n {
            return Err(TtdeError::InvalidParameter(format!(
                "Nyström sketch of {sketch} columns from {big_n} samples"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices = rand::seq::index::sample(&mut rng, big_n, sketch).into_vec();
        indices.sort_unstable();
        Ok(Self::with_indices(blocks, indices))
    }

    /// Factors for a caller-chosen column set.
    pub fn with_indices(blocks: &[FeatureBlock], indices: Vec<usize>) -> Self {
        let kernels = blocks.iter().map(|b| b.select_rows(&indices)).collect();
        Self { indices, kernels }
    }

    /// `K_m = Φ̃_m Φ̃_m^{(I)ᵀ}` (`N × r̃`).
    pub fn kernel(&self, blocks: &[FeatureBlock], m: usize) -> DMatrix<f64> {
        block_gram(&blocks[m], &self.kernels[m])
    }

    /// `M_j = ⊙_{m>j} K_m` (`N × r̃`), recomputed from scratch.
    pub fn m(&self, blocks: &[FeatureBlock], j: usize) -> DMatrix<f64> {
        let mut acc = self.kernel(blocks, j + 1);
        for m in j + 2..blocks.len() {
            acc.component_mul_assign(&self.kernel(blocks, m));
        }
        acc
    }

    /// `W_j = M_j[I, :]`.
    pub fn w(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.indices.len();
        DMatrix::from_fn(s, s, |a, b| m[(self.indices[a], b)])
    }

    /// `M_0, M_1, …, M_{d−2}` in order.
    pub fn forward<'a>(&'a self, blocks: &'a [FeatureBlock]) -> impl Iterator<Item = DMatrix<f64>> + 'a {
        let entries = blocks[0].rows() * self.indices.len();
        SuffixProducts::new(blocks.len(), entries, M_STORE_BUDGET, true, move |m| self.kernel(blocks, m))
    }
}

/// TT-SVD with `E_j` replaced by its Nyström approximation `M_j W_j⁺ M_jᵀ`.
pub fn tt_svd_kn(blocks: &[FeatureBlock], ranks: &Ranks, sketch: usize, seed: u64, pinv_rel_tol: f64) -> Result<TensorTrain> {
    let big_n = validate_blocks(blocks)?;
    let sizes: Vec<usize> = blocks.iter().map(|b| b.n()).collect();
    let r = resolve_ranks(&sizes, ranks)?;
    let factors = NystromFactors::new(blocks, sketch, seed)?;
    let inv2 = 1.0 / (big_n as f64 * big_n as f64);
    let mut sweep = LeftSweep::new(blocks);
    for (j, m) in factors.forward(blocks).enumerate() {
        let dm = sweep.d_matrix();
        let wp = pinv_sym(&factors.w(&m), pinv_rel_tol)?;
        let dmm = &dm * m;
        let a = (&dmm * wp * dmm.transpose()) * inv2;
        let u = top_eigenvectors(&a, r[j + 1])?;
        sweep.push(u, &dm)?;
    }
    sweep.finish()
}

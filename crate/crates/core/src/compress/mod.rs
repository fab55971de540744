//! TT compression of the empirical coefficient tensor straight from feature
//! blocks.
//!
//! Every algorithm shares the same left sweep: `D_j` stacks, per sample,
//! `ℓ_{j−1}^{(i)} ⊗ Φ̃_j^{(i)}` where `ℓ` is the running projection by the
//! cores found so far. They differ only in how the right-hand factor (the
//! exact `E_j`, its Nyström surrogate, or a sketch) is built.

mod cluster;
mod fast;
mod hier;
mod kn;
mod naive;
mod rsvd;
mod suffix;

pub use cluster::{tt_svd_c, ClusterIndexSet};
pub use fast::tt_svd_fast;
pub use hier::{dyadic_cover, tt_svd_c_hier, DyadicCovTree};
pub use kn::{tt_svd_kn, NystromFactors};
pub use naive::{tt_svd_naive, tt_svd_naive_with_spectra};
pub use rsvd::{tt_rsvd_t, RandomTTSketch};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::FeatureBlock;
use crate::error::{Result, TtdeError};
use crate::estimator::dense_coefficients;
use crate::tt::linalg::{sym_eigen, truncated_svd, SvdConvention};
use crate::tt::{Core, TensorTrain, DEFAULT_DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Naive,
    SvdFast,
    SvdKn,
    SvdC,
    SvdCHier,
    RsvdT,
}

impl Algo {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "naive" => Algo::Naive,
            "fast" | "svd_fast" => Algo::SvdFast,
            "kn" | "svd_kn" => Algo::SvdKn,
            "c" | "svd_c" | "cluster" => Algo::SvdC,
            "hier" | "svd_c_hier" => Algo::SvdCHier,
            "rsvd" | "rsvd_t" => Algo::RsvdT,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Naive => "naive",
            Algo::SvdFast => "svd_fast",
            Algo::SvdKn => "svd_kn",
            Algo::SvdC => "svd_c",
            Algo::SvdCHier => "svd_c_hier",
            Algo::RsvdT => "rsvd_t",
        }
    }

    /// Sketch size used when none is given.
    pub fn default_sketch_size(&self) -> usize {
        match self {
            Algo::SvdKn => 100,
            Algo::SvdCHier => 10,
            Algo::RsvdT => 30,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SketchLaw {
    #[default]
    Gaussian,
    Uniform,
}

/// Target ranks `r_1, …, r_{d−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranks {
    /// One rank for every cut, clipped to what each cut can hold.
    Uniform(usize),
    /// Exact ranks; a rank a cut cannot hold is an error.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressSpec {
    pub algo: Algo,
    pub ranks: Ranks,
    pub sketch_size: usize,
    pub cluster_order: usize,
    pub seed: u64,
    pub pinv_rel_tol: f64,
    pub law: SketchLaw,
    /// Entry budget for the dense ĉ built by the naive path.
    pub dense_cap: usize,
}

impl CompressSpec {
    pub fn new(algo: Algo, ranks: Ranks) -> Self {
        Self {
            algo,
            ranks,
            sketch_size: algo.default_sketch_size(),
            cluster_order: 1,
            seed: 0,
            pinv_rel_tol: 1e-10,
            law: SketchLaw::Gaussian,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }

    pub fn with_sketch_size(mut self, r: usize) -> Self {
        self.sketch_size = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cluster_order(mut self, k: usize) -> Self {
        self.cluster_order = k;
        self
    }

    pub fn with_law(mut self, law: SketchLaw) -> Self {
        self.law = law;
        self
    }
}

/// Concrete ranks `(1, r_1, …, r_{d−1}, 1)` for the given mode sizes.
pub fn resolve_ranks(mode_sizes: &[usize], ranks: &Ranks) -> Result<Vec<usize>> {
    let d = mode_sizes.len();
    let suffix = |j: usize| -> usize {
        mode_sizes[j..]
            .iter()
            .try_fold(1usize, |a, &n| a.checked_mul(n))
            .unwrap_or(usize::MAX)
    };
    let mut out = vec![1usize; d + 1];
    match ranks {
        Ranks::Uniform(r) => {
            if *r == 0 {
                return Err(TtdeError::InvalidParameter("ranks must be positive".into()));
            }
            for j in 1..d {
                out[j] = (*r).min(mode_sizes[j - 1] * out[j - 1]).min(suffix(j));
            }
        }
        Ranks::Explicit(v) => {
            if v.len() + 1 != d.max(1) {
                return Err(TtdeError::Shape(format!(
                    "{} ranks given for {} cuts",
                    v.len(),
                    d.saturating_sub(1)
                )));
            }
            for j in 1..d {
                let r = v[j - 1];
                let available = (mode_sizes[j - 1] * out[j - 1]).min(suffix(j));
                if r == 0 || r > available {
                    return Err(TtdeError::RankTooLarge {
                        cut: j,
                        rank: r,
                        available,
                    });
                }
                out[j] = r;
            }
        }
    }
    Ok(out)
}

/// Rank actually used at a cut whose factor has only `available` columns.
/// Uniform ranks clip; explicit ranks must fit.
pub(crate) fn cut_rank(ranks: &Ranks, target: usize, available: usize, cut: usize) -> Result<usize> {
    match ranks {
        Ranks::Uniform(_) => Ok(target.min(available).max(1)),
        Ranks::Explicit(_) if target > available => Err(TtdeError::RankTooLarge {
            cut,
            rank: target,
            available,
        }),
        Ranks::Explicit(_) => Ok(target),
    }
}

pub(crate) fn validate_blocks(blocks: &[FeatureBlock]) -> Result<usize> {
    let first = blocks
        .first()
        .ok_or_else(|| TtdeError::Shape("no feature blocks".into()))?;
    let rows = first.rows();
    if rows == 0 {
        return Err(TtdeError::InvalidParameter("N = 0 samples".into()));
    }
    if blocks.iter().any(|b| b.rows() != rows) {
        return Err(TtdeError::Shape("feature blocks disagree on N".into()));
    }
    Ok(rows)
}

/// Runs the configured algorithm.
pub fn compress(blocks: &[FeatureBlock], spec: &CompressSpec) -> Result<TensorTrain> {
    match spec.algo {
        Algo::Naive => {
            validate_blocks(blocks)?;
            let dense = dense_coefficients(blocks, spec.dense_cap)?;
            tt_svd_naive(&dense, &spec.ranks)
        }
        Algo::SvdFast => tt_svd_fast(blocks, &spec.ranks),
        Algo::SvdKn => tt_svd_kn(blocks, &spec.ranks, spec.sketch_size, spec.seed, spec.pinv_rel_tol),
        Algo::SvdC => tt_svd_c(blocks, &spec.ranks, spec.cluster_order),
        Algo::SvdCHier => tt_svd_c_hier(blocks, &spec.ranks, spec.sketch_size, spec.seed, spec.pinv_rel_tol),
        Algo::RsvdT => tt_rsvd_t(blocks, &spec.ranks, spec.sketch_size, spec.seed, spec.law),
    }
}

/// Per-sample left messages `ℓ^{(i)}`, stored as the columns of an `r × N` matrix.
pub(crate) struct LeftSweep<'a> {
    blocks: &'a [FeatureBlock],
    msgs: DMatrix<f64>,
    cores: Vec<Core>,
}

impl<'a> LeftSweep<'a> {
    pub fn new(blocks: &'a [FeatureBlock]) -> Self {
        let n = blocks[0].rows();
        Self {
            blocks,
            msgs: DMatrix::from_element(1, n, 1.0),
            cores: Vec::with_capacity(blocks.len()),
        }
    }

    pub fn samples(&self) -> usize {
        self.msgs.ncols()
    }

    /// Index of the core the next call to [`Self::d_matrix`] is about.
    pub fn position(&self) -> usize {
        self.cores.len()
    }

    /// `D_j` as an `(r n) × N` matrix with row index `a n + l`.
    pub fn d_matrix(&self) -> DMatrix<f64> {
        let block = &self.blocks[self.position()];
        let (r, n, big_n) = (self.msgs.nrows(), block.n(), self.samples());
        let mut d = DMatrix::zeros(r * n, big_n);
        for i in 0..big_n {
            let phi = block.row(i);
            let msg = self.msgs.column(i);
            let mut col = d.column_mut(i);
            for a in 0..r {
                let m = msg[a];
                for (l, p) in phi.iter().enumerate() {
                    col[a * n + l] = m * p;
                }
            }
        }
        d
    }

    /// Accepts `U` (orthonormal columns) as the next core and projects `D_j`.
    pub fn push(&mut self, u: DMatrix<f64>, d: &DMatrix<f64>) -> Result<()> {
        let n = self.blocks[self.position()].n();
        self.msgs = u.tr_mul(d);
        self.cores.push(Core::from_matrix(&u, n)?);
        Ok(())
    }

    /// Last core `(1/N) Σ_i D_d^{(i)}` and the assembled train.
    pub fn finish(mut self) -> Result<TensorTrain> {
        let d = self.d_matrix();
        let n = self.blocks[self.position()].n();
        let inv = 1.0 / self.samples() as f64;
        let mean = d.column_sum() * inv;
        let last = Core::from_matrix(&DMatrix::from_column_slice(mean.len(), 1, mean.as_slice()), n)?;
        self.cores.push(last);
        TensorTrain::new(self.cores)
    }
}

/// Top-`r` sign-fixed eigenvectors of a symmetric Gram matrix.
pub(crate) fn top_eigenvectors(a: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    if r > a.nrows() {
        return Err(TtdeError::RankTooLarge {
            cut: 0,
            rank: r,
            available: a.nrows(),
        });
    }
    let (_, vecs) = sym_eigen(a)?;
    Ok(vecs.columns(0, r).into_owned())
}

/// Top-`r` left singular vectors of a sketched unfolding.
pub(crate) fn top_left_singular(b: &DMatrix<f64>, r: usize, cut: usize) -> Result<DMatrix<f64>> {
    let available = b.nrows().min(b.ncols());
    if r > available {
        return Err(TtdeError::RankTooLarge {
            cut,
            rank: r,
            available,
        });
    }
    Ok(truncated_svd(b, &SvdConvention::with_rank(r))?.u)
}

/// `Σ_l ⟨Φ^{(i)}, Φ^{(k)}⟩` for all pairs, as an `N × M` matrix against a row subset.
pub(crate) fn block_gram(block: &FeatureBlock, cols: &FeatureBlock) -> DMatrix<f64> {
    let a = block.to_matrix();
    let b = cols.to_matrix();
    a * b.transpose()
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::basis::{feature_block, BasisFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Correlated samples in `[-1, 1]^d` and their Fourier feature blocks.
    pub fn blocks(n_samples: usize, d: usize, n: usize, alpha: f64, seed: u64) -> Vec<FeatureBlock> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = BasisFamily::fourier(n, 1.0).unwrap();
        let mut cols = vec![Vec::with_capacity(n_samples); d];
        for _ in 0..n_samples {
            let shared: f64 = rng.random_range(-0.5..0.5);
            for c in cols.iter_mut() {
                let x: f64 = shared + rng.random_range(-0.5..0.5);
                c.push(x.clamp(-1.0, 1.0));
            }
        }
        cols.iter()
            .enumerate()
            .map(|(j, c)| feature_block(c, &b, alpha, j).unwrap())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_ranks_are_clipped() {
        assert_eq!(resolve_ranks(&[2, 2, 2, 2], &Ranks::Uniform(5)).unwrap(), vec![1, 2, 4, 2, 1]);
        assert_eq!(resolve_ranks(&[3], &Ranks::Uniform(5)).unwrap(), vec![1, 1]);
    }

    #[test]
    fn explicit_ranks_are_checked() {
        assert!(resolve_ranks(&[2, 2, 2], &Ranks::Explicit(vec![3, 1])).is_err());
        assert!(resolve_ranks(&[2, 2, 2], &Ranks::Explicit(vec![2])).is_err());
        assert_eq!(
            resolve_ranks(&[2, 3, 2], &Ranks::Explicit(vec![2, 2])).unwrap(),
            vec![1, 2, 2, 1]
        );
    }

    #[test]
    fn algo_names_round_trip() {
        for a in [Algo::Naive, Algo::SvdFast, Algo::SvdKn, Algo::SvdC, Algo::SvdCHier, Algo::RsvdT] {
            assert_eq!(Algo::parse(a.name()), Some(a));
        }
        assert_eq!(Algo::parse("bogus"), None);
    }
}

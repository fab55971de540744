use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{cut_rank, resolve_ranks, top_left_singular, validate_blocks, LeftSweep, Ranks, SketchLaw};
use crate::basis::FeatureBlock;
use crate::error::{Result, TtdeError};
use crate::tt::{Core, TensorTrain};

/// Samples per Kronecker-feature chunk in [`RandomTTSketch::right_messages`].
const SAMPLE_CHUNK: usize = 512;

/// Random TT used as a right sketch: `H_1` is `1 × n × r̃`, middle cores
/// `r̃ × n × r̃`, `H_d` is `r̃ × n × 1`.
///
/// Entries have unit variance, divided by `√r̃` on cores with a rank-`r̃`
/// right leg so that products of many cores stay of order one.
#[derive(Debug, Clone)]
pub struct RandomTTSketch {
    pub cores: Vec<Core>,
    pub law: SketchLaw,
}

impl RandomTTSketch {
    pub fn new(mode_sizes: &[usize], sketch: usize, seed: u64, law: SketchLaw) -> Result<Self> {
        if sketch == 0 {
            return Err(TtdeError::InvalidParameter("sketch size must be positive".into()));
        }
        let d = mode_sizes.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| -> f64 {
            let z: f64 = match law {
                SketchLaw::Gaussian => rng.sample(StandardNormal),
                SketchLaw::Uniform => rng.random_range(-1.0..1.0) * 3f64.sqrt(),
            };
            z * scale
        };
        let mut cores = Vec::with_capacity(d);
        for (j, &n) in mode_sizes.iter().enumerate() {
            let left = if j == 0 { 1 } else { sketch };
            let right = if j + 1 == d { 1 } else { sketch };
            let scale = if right > 1 { 1.0 / (sketch as f64).sqrt() } else { 1.0 };
            let data = (0..left * n * right).map(|_| draw(scale)).collect();
            cores.push(Core::new(left, n, right, data)?);
        }
        Ok(Self { cores, law })
    }

    /// Sketch rows `E_j^{(i)}` for every core index `j < d − 1`, each stored
    /// as an `r̃ × N` matrix.
    pub fn right_messages(&self, blocks: &[FeatureBlock]) -> Vec<DMatrix<f64>> {
        let d = blocks.len();
        let big_n = blocks[0].rows();
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(d.saturating_sub(1));
        if d < 2 {
            return out;
        }
        // E_{d-1}^{(i)} = H_d Φ_d^{(i)}
        let last = &self.cores[d - 1];
        let (s, n, _) = last.shape();
        let h = DMatrix::from_row_slice(s, n, last.data());
        let phi = blocks[d - 1].to_matrix();
        out.push(h * phi.transpose());
        for m in (1..d - 1).rev() {
            let core = &self.cores[m];
            let (s, n, s2) = core.shape();
            let prev = out.last().expect("seeded above");
            // H as s × (n s2), column index l s2 + b
            let h = DMatrix::from_row_slice(s, n * s2, core.data());
            let mut next = DMatrix::zeros(s, big_n);
            // columns Φ^{(i)} ⊗ e^{(i)}, built a chunk of samples at a time
            let mut x = DMatrix::zeros(n * s2, SAMPLE_CHUNK.min(big_n));
            for start in (0..big_n).step_by(SAMPLE_CHUNK) {
                let width = SAMPLE_CHUNK.min(big_n - start);
                for c in 0..width {
                    let i = start + c;
                    let phi = blocks[m].row(i);
                    let e = prev.column(i);
                    let mut col = x.column_mut(c);
                    for (l, p) in phi.iter().enumerate() {
                        for b in 0..s2 {
                            col[l * s2 + b] = p * e[b];
                        }
                    }
                }
                let mut dst = next.columns_mut(start, width);
                dst.gemm(1.0, &h, &x.columns(0, width), 0.0);
            }
            out.push(next);
        }
        out.reverse();
        out
    }
}

/// TT-SVD with the right unfolding sketched by a random tensor train.
pub fn tt_rsvd_t(blocks: &[FeatureBlock], ranks: &Ranks, sketch: usize, seed: u64, law: SketchLaw) -> Result<TensorTrain> {
    let big_n = validate_blocks(blocks)?;
    let sizes: Vec<usize> = blocks.iter().map(|b| b.n()).collect();
    let r = resolve_ranks(&sizes, ranks)?;
    let d = blocks.len();
    let h = RandomTTSketch::new(&sizes, sketch, seed, law)?;
    let e = h.right_messages(blocks);
    let inv = 1.0 / big_n as f64;
    let mut sweep = LeftSweep::new(blocks);
    for j in 0..d - 1 {
        let dm = sweep.d_matrix();
        let b = (&dm * e[j].transpose()) * inv;
        let rank = cut_rank(ranks, r[j + 1], b.nrows().min(b.ncols()), j + 1)?;
        let u = top_left_singular(&b, rank, j + 1)?;
        sweep.push(u, &dm)?;
    }
    sweep.finish()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::blocks;
    use super::*;
    use crate::estimator::dense_coefficients;
    use crate::tt::{tt_to_dense, unfold};

    #[test]
    fn two_mode_sketch_is_right_multiplication() {
        let f = blocks(30, 2, 4, 0.8, 1);
        let h = RandomTTSketch::new(&[4, 4], 3, 5, SketchLaw::Gaussian).unwrap();
        let e = h.right_messages(&f);
        let c1 = unfold(&dense_coefficients(&f, 1 << 10).unwrap(), 1).unwrap();
        let h2 = DMatrix::from_row_slice(3, 4, h.cores[1].data());
        let expected = &c1 * h2.transpose();
        let d1 = f[0].to_matrix().transpose();
        let got = (d1 * e[0].transpose()) / 30.0;
        assert!((got - expected).abs().max() < 1e-12);
        let t = tt_rsvd_t(&f, &Ranks::Uniform(2), 3, 5, SketchLaw::Gaussian).unwrap();
        let u = t.core(0).as_matrix();
        let svd = c1.svd(true, false);
        let range = svd.u.unwrap().columns(0, 4).into_owned();
        // column space of the output lies in the column space of ĉ^{(1)}
        let resid = &u - &range * (range.transpose() * &u);
        assert!(resid.abs().max() < 1e-10);
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let f = blocks(50, 4, 3, 0.5, 2);
        let a = tt_rsvd_t(&f, &Ranks::Uniform(2), 6, 11, SketchLaw::Uniform).unwrap();
        let b = tt_rsvd_t(&f, &Ranks::Uniform(2), 6, 11, SketchLaw::Uniform).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_rank_sketch_is_exact() {
        let f = blocks(40, 3, 2, 0.9, 3);
        let exact = dense_coefficients(&f, 1 << 10).unwrap();
        let t = tt_rsvd_t(&f, &Ranks::Uniform(4), 12, 0, SketchLaw::Gaussian).unwrap();
        assert!(tt_to_dense(&t).unwrap().rel_distance(&exact) < 1e-10);
    }
}

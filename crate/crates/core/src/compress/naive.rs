use nalgebra::DMatrix;

use super::{resolve_ranks, Ranks};
use crate::error::Result;
use crate::tt::linalg::{truncated_svd, SvdConvention};
use crate::tt::{unfold, Core, DenseTensor, TensorTrain};

/// Sequential truncated SVD of a dense tensor.
pub fn tt_svd_naive(a: &DenseTensor, ranks: &Ranks) -> Result<TensorTrain> {
    Ok(tt_svd_naive_with_spectra(a, ranks)?.0)
}

/// As [`tt_svd_naive`], also returning the discarded `Σ σ²` at every cut.
pub fn tt_svd_naive_with_spectra(a: &DenseTensor, ranks: &Ranks) -> Result<(TensorTrain, Vec<f64>)> {
    let sizes = a.mode_sizes().to_vec();
    let d = sizes.len();
    let r = resolve_ranks(&sizes, ranks)?;
    let mut b = unfold(a, 1)?;
    let mut cores = Vec::with_capacity(d);
    let mut discarded = Vec::with_capacity(d.saturating_sub(1));
    for j in 0..d.saturating_sub(1) {
        let full = truncated_svd(&b, &SvdConvention { rank: b.nrows().min(b.ncols()), rel_singular_floor: 0.0 })?;
        discarded.push(full.singular_values[r[j + 1]..].iter().map(|s| s * s).sum());
        let u = full.u.columns(0, r[j + 1]).into_owned();
        cores.push(Core::from_matrix(&u, sizes[j])?);
        let proj = u.tr_mul(&b); // r_j × (n_{j+1} ⋯ n_d)
        let n_next = sizes[j + 1];
        let rest = proj.ncols() / n_next;
        let mut next = DMatrix::zeros(r[j + 1] * n_next, rest);
        for row in 0..r[j + 1] {
            for i in 0..n_next {
                for c in 0..rest {
                    next[(row * n_next + i, c)] = proj[(row, i * rest + c)];
                }
            }
        }
        b = next;
    }
    cores.push(Core::from_matrix(&b, sizes[d - 1])?);
    Ok((TensorTrain::new(cores)?, discarded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::tests::random_tt;
    use crate::tt::{left_stack, tt_to_dense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_rank_round_trip() {
        let t = random_tt(&[3, 3, 3, 3], &[1, 2, 2, 2, 1], 4);
        let dense = tt_to_dense(&t).unwrap();
        let back = tt_svd_naive(&dense, &Ranks::Explicit(vec![2, 2, 2])).unwrap();
        assert!(tt_to_dense(&back).unwrap().rel_distance(&dense) < 1e-10);
    }

    #[test]
    fn rank_one_is_exact() {
        let t = TensorTrain::rank_one(&[vec![1.0, 2.0], vec![-1.0, 0.5, 3.0], vec![2.0, 2.0]]).unwrap();
        let dense = tt_to_dense(&t).unwrap();
        let back = tt_svd_naive(&dense, &Ranks::Uniform(1)).unwrap();
        assert!(tt_to_dense(&back).unwrap().rel_distance(&dense) < 1e-12);
    }

    #[test]
    fn error_matches_discarded_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dense = DenseTensor::from_fn(vec![3; 4], |_| rng.random_range(-1.0..1.0)).unwrap();
        let (t, disc) = tt_svd_naive_with_spectra(&dense, &Ranks::Uniform(2)).unwrap();
        let err = {
            let approx = tt_to_dense(&t).unwrap();
            dense
                .entries()
                .iter()
                .zip(approx.entries())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let predicted = disc.iter().sum::<f64>().sqrt();
        assert!((err - predicted).abs() < 1e-9, "{err} vs {predicted}");
    }

    #[test]
    fn stacks_are_left_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dense = DenseTensor::from_fn(vec![2, 3, 2, 3], |_| rng.random_range(-1.0..1.0)).unwrap();
        let t = tt_svd_naive(&dense, &Ranks::Uniform(3)).unwrap();
        for k in 1..4 {
            let g = left_stack(&t, k).unwrap();
            let r = g.ncols();
            assert!((g.transpose() * &g - DMatrix::identity(r, r)).abs().max() < 1e-10);
        }
    }
}

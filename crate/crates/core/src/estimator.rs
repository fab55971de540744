//! Convolution, compression dispatch, and deconvolution.
//!
//! The empirical coefficient tensor is `ĉ = (1/N) Σ_i ⊗_j Φ̃_j^{(i)}`; its
//! entry at a multi-index carrying `k` non-constant factors is damped by
//! `α^k`. Deconvolution undoes the damping core by core.

use crate::basis::{feature_block, BasisFamily, FeatureBlock, GridSpec};
use crate::compress::{self, CompressSpec};
use crate::density::{DensityModel, Dimension, MeanField};
use crate::error::{Result, TtdeError};
use crate::tt::{DenseTensor, TensorTrain, DEFAULT_DENSE_CAP};

/// `N × d` observations, row-major, with one grid per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    n_samples: usize,
    d: usize,
    boxes: Vec<GridSpec>,
}

impl SampleSet {
    pub fn new(data: Vec<f64>, d: usize, boxes: Vec<GridSpec>) -> Result<Self> {
        if d == 0 || boxes.len() != d {
            return Err(TtdeError::Shape(format!(
                "{} boxes for dimension {d}",
                boxes.len()
            )));
        }
        if data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(TtdeError::Shape(format!(
                "{} values do not form rows of length {d}",
                data.len()
            )));
        }
        for (j, b) in boxes.iter().enumerate() {
            let count = data
                .iter()
                .skip(j)
                .step_by(d)
                .filter(|x| !b.contains(**x))
                .count();
            if count > 0 {
                return Err(TtdeError::OutOfDomain { dim: j, count });
            }
        }
        Ok(Self {
            n_samples: data.len() / d,
            data,
            d,
            boxes,
        })
    }

    /// Same box on every axis.
    pub fn with_uniform_box(data: Vec<f64>, d: usize, b: GridSpec) -> Result<Self> {
        Self::new(data, d, vec![b; d])
    }

    /// Box per axis padded around the data hull by `pad` and snapped to `mesh`.
    pub fn with_bounding_box(data: Vec<f64>, d: usize, mesh: f64, pad: f64) -> Result<Self> {
        if d == 0 || data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(TtdeError::Shape("empty or ragged sample data".into()));
        }
        let boxes = (0..d)
            .map(|j| {
                let (lo, hi) = data
                    .iter()
                    .skip(j)
                    .step_by(d)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                        (a.min(*x), b.max(*x))
                    });
                let lo = ((lo - pad) / mesh).floor() * mesh;
                let mut hi = ((hi + pad) / mesh).ceil() * mesh;
                if hi <= lo {
                    hi = lo + mesh;
                }
                GridSpec::new(lo, hi, mesh)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(data, d, boxes)
    }

    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn boxes(&self) -> &[GridSpec] {
        &self.boxes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.d).copied().collect()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, self.d, self.boxes.clone())
    }
}

/// Coefficient damping by cluster order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `α^k` on k-cluster entries.
    Soft { alpha: f64 },
    /// Indicator of cluster order `≤ K`.
    Hard { order: usize },
}

impl Weight {
    /// Weight of a multi-index (0-based levels; level 0 is the constant).
    pub fn of(&self, l: &[usize]) -> f64 {
        let k = l.iter().filter(|&&x| x != 0).count();
        match *self {
            Weight::Soft { alpha } => alpha.powi(k as i32),
            Weight::Hard { order } => {
                if k <= order {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `√(C / ((n − 1) n d))`.
pub fn alpha_default(n: usize, d: usize, c: f64) -> Result<f64> {
    if n < 2 || d < 1 || !(c > 0.0) {
        return Err(TtdeError::InvalidParameter(format!(
            "alpha_default needs n ≥ 2, d ≥ 1, C > 0 (got n={n}, d={d}, C={c})"
        )));
    }
    Ok((c / ((n - 1) * n * d) as f64).sqrt())
}

fn check_bases(s: &SampleSet, bases: &[BasisFamily]) -> Result<()> {
    if bases.len() != s.d() {
        return Err(TtdeError::Shape(format!(
            "{} bases for {} dimensions",
            bases.len(),
            s.d()
        )));
    }
    Ok(())
}

/// Brute-force entry of the weighted empirical coefficient tensor.
pub fn coeff_entry_oracle(s: &SampleSet, l: &[usize], w: Weight, bases: &[BasisFamily]) -> Result<f64> {
    check_bases(s, bases)?;
    if l.len() != s.d() {
        return Err(TtdeError::Shape("multi-index length differs from d".into()));
    }
    for (j, (&lj, b)) in l.iter().zip(bases).enumerate() {
        if lj >= b.n() {
            return Err(TtdeError::OutOfRange(format!(
                "level {lj} at dimension {j} with n={}",
                b.n()
            )));
        }
    }
    let mut total = 0.0;
    for i in 0..s.len() {
        let x = s.row(i);
        let mut prod = 1.0;
        for (j, b) in bases.iter().enumerate() {
            if l[j] != 0 {
                prod *= b.eval(x[j])[l[j]];
            }
        }
        total += prod;
    }
    Ok(w.of(l) * total / s.len() as f64)
}

pub fn feature_blocks(s: &SampleSet, bases: &[BasisFamily], alpha: f64) -> Result<Vec<FeatureBlock>> {
    check_bases(s, bases)?;
    bases
        .iter()
        .enumerate()
        .map(|(j, b)| feature_block(&s.column(j), b, alpha, j))
        .collect()
}

/// Dense `ĉ` from feature blocks; oracle scale only.
pub fn dense_coefficients(blocks: &[FeatureBlock], cap: usize) -> Result<DenseTensor> {
    let sizes: Vec<usize> = blocks.iter().map(|b| b.n()).collect();
    let entries = sizes
        .iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .unwrap_or(usize::MAX);
    if entries > cap {
        return Err(TtdeError::MemoryCap { entries, cap });
    }
    let rows = blocks.first().map(|b| b.rows()).unwrap_or(0);
    if rows == 0 {
        return Err(TtdeError::InvalidParameter("no samples".into()));
    }
    let mut acc = vec![0.0; entries];
    let mut kron = Vec::with_capacity(entries);
    let mut next = Vec::with_capacity(entries);
    for i in 0..rows {
        kron.clear();
        kron.push(1.0);
        for b in blocks {
            next.clear();
            for &k in kron.iter() {
                next.extend(b.row(i).iter().map(|v| k * v));
            }
            std::mem::swap(&mut kron, &mut next);
        }
        for (a, k) in acc.iter_mut().zip(&kron) {
            *a += k;
        }
    }
    let inv = 1.0 / rows as f64;
    acc.iter_mut().for_each(|x| *x *= inv);
    DenseTensor::new(sizes, acc)
}

/// `c̃ = TT-compress(diag(w̃_α) Φᵀ p̂)`.
pub fn fit(s: &SampleSet, bases: &[BasisFamily], alpha: f64, algo: &CompressSpec) -> Result<TensorTrain> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TtdeError::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let blocks = feature_blocks(s, bases, alpha)?;
    compress::compress(&blocks, algo)
}

/// Undoes the α-damping and attaches bases and mean-field marginals.
///
/// Level 1 of every core is divided by `1 + λ`, all other levels by `α + λ`.
pub fn deconvolve(
    c: &TensorTrain,
    alpha: f64,
    lambda: f64,
    bases: &[BasisFamily],
    grids: &[GridSpec],
    mean_field: &[MeanField],
) -> Result<DensityModel> {
    if !(lambda >= 0.0) || !(alpha >= 0.0) {
        return Err(TtdeError::InvalidParameter(format!(
            "alpha={alpha}, lambda={lambda}"
        )));
    }
    if alpha + lambda == 0.0 {
        return Err(TtdeError::InvalidParameter("alpha + lambda must be positive".into()));
    }
    let d = c.d();
    if bases.len() != d || grids.len() != d || mean_field.len() != d {
        return Err(TtdeError::Shape(format!(
            "deconvolve needs {d} bases, grids and mean-fields"
        )));
    }
    let mut coeff = c.clone();
    for j in 0..d {
        if bases[j].n() != coeff.core(j).mode_size() {
            return Err(TtdeError::Shape(format!(
                "basis of size {} for mode size {} at dimension {j}",
                bases[j].n(),
                coeff.core(j).mode_size()
            )));
        }
        let core = coeff.core_mut(j);
        let (r, n, rr) = core.shape();
        for a in 0..r {
            for i in 0..n {
                let s = if i == 0 { 1.0 / (1.0 + lambda) } else { 1.0 / (alpha + lambda) };
                for b in 0..rr {
                    let v = core.get(a, i, b);
                    core.set(a, i, b, v * s);
                }
            }
        }
    }
    let dims = (0..d)
        .map(|j| Dimension::new(bases[j].clone(), grids[j], mean_field[j].clone()))
        .collect::<Result<Vec<_>>>()?;
    DensityModel::new(coeff, dims, alpha, lambda)
}

/// `fit`, `deconvolve` with uniform mean-fields on the sample boxes, and
/// `normalize`, in one call.
pub fn fit_density(s: &SampleSet, bases: &[BasisFamily], alpha: f64, algo: &CompressSpec) -> Result<DensityModel> {
    let c = fit(s, bases, alpha, algo)?;
    let mf = vec![MeanField::Uniform; s.d()];
    deconvolve(&c, alpha, 0.0, bases, s.boxes(), &mf)?.normalize()
}

/// Inverse of [`deconvolve`] on the coefficient train: multiplies level 1 by
/// `1 + λ` and other levels by `α + λ`.
pub fn convolve_coefficients(c: &TensorTrain, alpha: f64, lambda: f64) -> TensorTrain {
    let mut out = c.clone();
    for j in 0..out.d() {
        let core = out.core_mut(j);
        let (r, n, rr) = core.shape();
        for a in 0..r {
            for i in 0..n {
                let s = if i == 0 { 1.0 + lambda } else { alpha + lambda };
                for b in 0..rr {
                    let v = core.get(a, i, b);
                    core.set(a, i, b, v * s);
                }
            }
        }
    }
    out
}

/// Full coefficient tensor of the hard-threshold estimator of order `K`.
pub fn hard_project_oracle(s: &SampleSet, k: usize, bases: &[BasisFamily]) -> Result<DenseTensor> {
    let blocks = feature_blocks(s, bases, 1.0)?;
    let mut dense = dense_coefficients(&blocks, DEFAULT_DENSE_CAP)?;
    let sizes = dense.mode_sizes().to_vec();
    let w = Weight::Hard { order: k };
    let mut idx = vec![0usize; sizes.len()];
    for v in dense.entries_mut().iter_mut() {
        *v *= w.of(&idx);
        crate::tt::increment(&mut idx, &sizes);
    }
    Ok(dense)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::{Algo, Ranks};
    use crate::tt::{increment, tt_to_dense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_samples(n: usize, d: usize, half: f64, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-half..half)).collect();
        SampleSet::with_uniform_box(data, d, GridSpec::symmetric(half, 0.1).unwrap()).unwrap()
    }

    #[test]
    fn alpha_default_values() {
        assert!((alpha_default(17, 10, 1.0).unwrap() - 1.0 / 2720f64.sqrt()).abs() < 1e-15);
        assert!((alpha_default(2, 1, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(alpha_default(1, 3, 1.0).is_err());
        assert!(alpha_default(5, 3, 1e-3).unwrap() < alpha_default(5, 3, 1e-2).unwrap());
    }

    #[test]
    fn oracle_entries() {
        let s = uniform_samples(40, 3, 1.0, 2);
        let bases = vec![BasisFamily::fourier(3, 1.0).unwrap(); 3];
        let w = Weight::Soft { alpha: 0.3 };
        assert!((coeff_entry_oracle(&s, &[0, 0, 0], w, &bases).unwrap() - 1.0).abs() < 1e-15);
        let direct: f64 = s.column(1).iter().map(|x| bases[1].eval(*x)[2]).sum::<f64>() / 40.0;
        let e = coeff_entry_oracle(&s, &[0, 2, 0], w, &bases).unwrap();
        assert!((e - 0.3 * direct).abs() < 1e-14);
        let hard = Weight::Hard { order: 0 };
        assert_eq!(coeff_entry_oracle(&s, &[1, 0, 0], hard, &bases).unwrap(), 0.0);
    }

    #[test]
    fn naive_fit_at_full_rank_equals_oracle() {
        let s = uniform_samples(30, 4, 1.0, 5);
        let bases = vec![BasisFamily::fourier(3, 1.0).unwrap(); 4];
        let spec = CompressSpec::new(Algo::Naive, Ranks::Explicit(vec![3, 9, 3]));
        let c = fit(&s, &bases, 0.5, &spec).unwrap();
        let dense = tt_to_dense(&c).unwrap();
        let w = Weight::Soft { alpha: 0.5 };
        let mut idx = vec![0; 4];
        for _ in 0..81 {
            let o = coeff_entry_oracle(&s, &idx, w, &bases).unwrap();
            assert!((dense.get(&idx) - o).abs() < 1e-10);
            increment(&mut idx, &[3; 4]);
        }
    }

    #[test]
    fn single_sample_is_rank_one() {
        let s = uniform_samples(1, 3, 1.0, 9);
        let bases = vec![BasisFamily::fourier(4, 1.0).unwrap(); 3];
        let blocks = feature_blocks(&s, &bases, 0.2).unwrap();
        let exact = dense_coefficients(&blocks, 1 << 20).unwrap();
        for algo in [Algo::Naive, Algo::SvdFast] {
            let spec = CompressSpec::new(algo, Ranks::Uniform(1));
            let c = fit(&s, &bases, 0.2, &spec).unwrap();
            assert!(tt_to_dense(&c).unwrap().rel_distance(&exact) < 1e-10);
        }
    }

    #[test]
    fn deconvolve_scales_and_inverts() {
        let bases = vec![BasisFamily::fourier(3, 1.0).unwrap(); 2];
        let grids = vec![GridSpec::symmetric(1.0, 0.1).unwrap(); 2];
        let mf = vec![MeanField::Uniform; 2];
        let c = TensorTrain::rank_one(&[vec![1.0, 0.02, -0.01], vec![1.0, 0.005, 0.03]]).unwrap();
        let m = deconvolve(&c, 0.01, 0.0, &bases, &grids, &mf).unwrap();
        let g = m.coeff().core(0);
        assert_eq!(g.get(0, 0, 0), 1.0);
        assert!((g.get(0, 1, 0) - 2.0).abs() < 1e-12);
        let back = convolve_coefficients(m.coeff(), 0.01, 0.0);
        for j in 0..2 {
            for (a, b) in back.core(j).data().iter().zip(c.core(j).data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let shrunk = deconvolve(&c, 0.01, 0.5, &bases, &grids, &mf).unwrap();
        assert!(shrunk.coeff().core(0).get(0, 1, 0).abs() < g.get(0, 1, 0).abs());
        assert!(deconvolve(&c, 0.0, 0.0, &bases, &grids, &mf).is_err());
    }

    #[test]
    fn hard_projection_limits() {
        let s = uniform_samples(25, 3, 1.0, 4);
        let bases = vec![BasisFamily::fourier(3, 1.0).unwrap(); 3];
        let full = hard_project_oracle(&s, 3, &bases).unwrap();
        let mut idx = vec![0; 3];
        for _ in 0..27 {
            let o = coeff_entry_oracle(&s, &idx, Weight::Soft { alpha: 1.0 }, &bases).unwrap();
            assert!((full.get(&idx) - o).abs() < 1e-12);
            increment(&mut idx, &[3; 3]);
        }
        let k0 = hard_project_oracle(&s, 0, &bases).unwrap();
        assert_eq!(k0.entries()[0], 1.0);
        assert!(k0.entries()[1..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn sample_set_ingestion() {
        let b = GridSpec::symmetric(1.0, 0.1).unwrap();
        assert!(SampleSet::with_uniform_box(vec![], 2, b).is_err());
        assert!(matches!(
            SampleSet::with_uniform_box(vec![0.0, 2.0, 0.5, 0.5], 2, b),
            Err(TtdeError::OutOfDomain { dim: 1, count: 1 })
        ));
        let s = SampleSet::with_bounding_box(vec![0.03, 1.26, -0.4, 0.9], 2, 0.1, 0.0).unwrap();
        assert!(s.boxes()[0].lo <= -0.4 && s.boxes()[1].hi >= 1.26);
    }
}

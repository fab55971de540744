//! PCA rotation, KDE marginals, and the general-distribution fit that chains
//! them in front of the estimator.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::{orthonormalize_wrt, BasisFamily, GridSpec};
use crate::compress::CompressSpec;
use crate::density::{DensityModel, MeanField, PcaMap};
use crate::error::{Result, TtdeError};
use crate::estimator::{deconvolve, fit, SampleSet};
use crate::tt::linalg::{orthonormalize, subspace_angle, sym_eigen};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `d × d'`, orthonormal columns.
    pub q: DMatrix<f64>,
    pub center: Vec<f64>,
    /// Covariance eigenvalues, nonincreasing.
    pub eigvals: Vec<f64>,
}

impl PcaModel {
    pub fn latent_dim(&self) -> usize {
        self.q.ncols()
    }

    pub fn map(&self) -> PcaMap {
        PcaMap {
            q: self.q.clone(),
            center: self.center.clone(),
        }
    }

    /// `z = Qᵀ(x − center)` for every row; boxes are the padded bounding box
    /// of the latent data.
    pub fn transform(&self, s: &SampleSet, mesh: f64, pad: f64) -> Result<SampleSet> {
        let map = self.map();
        let mut z = Vec::with_capacity(s.len() * self.latent_dim());
        for i in 0..s.len() {
            z.extend(map.to_latent(s.row(i)));
        }
        SampleSet::with_bounding_box(z, self.latent_dim(), mesh, pad)
    }
}

fn check_pca_args(s: &SampleSet, latent: usize) -> Result<()> {
    if latent == 0 || latent > s.d() {
        return Err(TtdeError::InvalidParameter(format!(
            "latent dimension {latent} for data of dimension {}",
            s.d()
        )));
    }
    if s.len() < 2 {
        return Err(TtdeError::InvalidParameter("PCA needs at least two samples".into()));
    }
    Ok(())
}

fn column_means(s: &SampleSet) -> Vec<f64> {
    let d = s.d();
    let mut c = vec![0.0; d];
    for i in 0..s.len() {
        for (a, x) in c.iter_mut().zip(s.row(i)) {
            *a += x;
        }
    }
    c.iter_mut().for_each(|v| *v /= s.len() as f64);
    c
}

/// Sample covariance with the `1/(N−1)` normalization.
pub fn covariance(s: &SampleSet, center: &[f64]) -> DMatrix<f64> {
    let d = s.d();
    let mut cov = DMatrix::zeros(d, d);
    let mut y = vec![0.0; d];
    for i in 0..s.len() {
        for ((o, x), c) in y.iter_mut().zip(s.row(i)).zip(center) {
            *o = x - c;
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += y[a] * y[b];
            }
        }
    }
    let inv = 1.0 / (s.len() - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] * inv;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Exact PCA of the centered data.
pub fn pca_fit(s: &SampleSet, latent: usize) -> Result<PcaModel> {
    check_pca_args(s, latent)?;
    let center = column_means(s);
    let cov = covariance(s, &center);
    let (vals, vecs) = sym_eigen(&cov)?;
    if !(vals[0] > 0.0) {
        return Err(TtdeError::Degenerate("data has zero variance".into()));
    }
    Ok(PcaModel {
        q: vecs.columns(0, latent).into_owned(),
        center,
        eigvals: vals[..latent].iter().map(|v| v.max(0.0)).collect(),
    })
}

/// Block power iteration that only streams over rows, never forming the
/// covariance; `passes` bounds the number of sweeps.
pub fn pca_fit_streaming(s: &SampleSet, latent: usize, passes: usize, seed: u64) -> Result<PcaModel> {
    check_pca_args(s, latent)?;
    let d = s.d();
    let center = column_means(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = orthonormalize(&DMatrix::from_fn(d, latent, |_, _| StandardNormal.sample(&mut rng)));
    // Y = Σ y (yᵀ Q) over centered rows
    let apply = |q: &DMatrix<f64>| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(d, latent);
        let mut y = DVector::zeros(d);
        for i in 0..s.len() {
            for ((o, x), c) in y.iter_mut().zip(s.row(i)).zip(&center) {
                *o = x - c;
            }
            let proj = q.tr_mul(&y);
            acc.ger(1.0, &y, &proj, 1.0);
        }
        acc / (s.len() - 1) as f64
    };
    let mut converged = false;
    for pass in 0..passes {
        let next = orthonormalize(&apply(&q));
        let angle = subspace_angle(&q, &next);
        q = next;
        if angle < 1e-9 {
            debug!("streaming PCA converged after {} passes", pass + 1);
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("streaming PCA stopped after {passes} passes without converging");
    }
    // Rayleigh–Ritz inside the subspace orders and sign-fixes the directions
    let cq = apply(&q);
    let (vals, rot) = sym_eigen(&(q.transpose() * cq))?;
    if !(vals[0] > 0.0) {
        return Err(TtdeError::Degenerate("data has zero variance".into()));
    }
    let mut q = q * rot;
    for c in 0..latent {
        crate::tt::linalg::sign_fix_column(&mut q, c);
    }
    Ok(PcaModel {
        q,
        center,
        eigvals: vals.iter().map(|v| v.max(0.0)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    pub grid: GridSpec,
    /// Node values with `Σ density · mesh = 1`.
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Binned Gaussian KDE on `grid`, reflected at both ends of the box.
///
/// Samples are linearly binned onto a grid 16 times finer than `grid` before
/// the kernel sum, which keeps the cost independent of `N`.
pub fn kde1d(samples: &[f64], grid: &GridSpec, bandwidth: Option<f64>) -> Result<Kde1d> {
    let n = samples.len();
    if n < 2 {
        return Err(TtdeError::InvalidParameter("KDE needs at least two samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(TtdeError::Degenerate("KDE of zero-variance data".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(TtdeError::InvalidParameter(format!("bandwidth {h}"))),
        None => 1.06 * sd * (n as f64).powf(-0.2),
    };
    let fine = 16 * grid.points();
    let step = grid.width() / fine as f64;
    let mut bins = vec![0.0; fine + 1];
    for &x in samples {
        let t = ((x - grid.lo) / step).clamp(0.0, fine as f64);
        let k = (t.floor() as usize).min(fine - 1);
        let f = t - k as f64;
        bins[k] += 1.0 - f;
        bins[k + 1] += f;
    }
    let kernel = |u: f64| (-0.5 * u * u).exp();
    let (lo, hi) = (grid.lo, grid.hi);
    let mut density: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&g| {
            bins.iter()
                .enumerate()
                .filter(|(_, c)| **c > 0.0)
                .map(|(k, c)| {
                    let y = lo + k as f64 * step;
                    c * (kernel((g - y) / h) + kernel((g - (2.0 * lo - y)) / h) + kernel((g - (2.0 * hi - y)) / h))
                })
                .sum::<f64>()
        })
        .collect();
    let mass: f64 = density.iter().sum::<f64>() * grid.mesh;
    if !(mass > 0.0) {
        return Err(TtdeError::Degenerate("KDE has no mass on the grid".into()));
    }
    density.iter_mut().for_each(|v| *v /= mass);
    Ok(Kde1d {
        grid: *grid,
        density,
        bandwidth: h,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rotation {
    Pca,
    /// Pass the data through unrotated.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Marginals {
    /// KDE mean-field per latent dimension with its orthonormalized basis.
    Kde { bandwidth: Option<f64> },
    /// Fixed bases with uniform mean-field on each latent box.
    Given(Vec<BasisFamily>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralFit {
    pub latent_dim: usize,
    pub n: usize,
    pub alpha: f64,
    pub compress: CompressSpec,
    pub rotation: Rotation,
    pub marginals: Marginals,
    /// Grid mesh and padding of the latent boxes (PCA only).
    pub mesh: f64,
    pub pad: f64,
}

/// Rotate, estimate marginals, fit, deconvolve and normalize.
pub fn fit_general(s: &SampleSet, opts: &GeneralFit) -> Result<DensityModel> {
    let (latent, pca) = match opts.rotation {
        Rotation::Pca => {
            let pca = pca_fit(s, opts.latent_dim)?;
            let explained: f64 = pca.eigvals.iter().sum();
            debug!("PCA keeps variance {explained:.4e} in {} directions", pca.latent_dim());
            (pca.transform(s, opts.mesh, opts.pad)?, Some(pca))
        }
        Rotation::Identity => {
            if opts.latent_dim != s.d() {
                return Err(TtdeError::InvalidParameter(format!(
                    "identity rotation needs latent dimension {}, got {}",
                    s.d(),
                    opts.latent_dim
                )));
            }
            (s.clone(), None)
        }
    };
    let grids: Vec<GridSpec> = latent.boxes().to_vec();
    let (bases, mean_field): (Vec<BasisFamily>, Vec<MeanField>) = match &opts.marginals {
        Marginals::Kde { bandwidth } => {
            let mut bases = Vec::with_capacity(grids.len());
            let mut mfs = Vec::with_capacity(grids.len());
            for (j, g) in grids.iter().enumerate() {
                let kde = kde1d(&latent.column(j), g, *bandwidth)?;
                bases.push(orthonormalize_wrt(g, &kde.density, opts.n)?);
                mfs.push(MeanField::Tabulated { density: kde.density });
            }
            (bases, mfs)
        }
        Marginals::Given(b) => {
            if b.len() != grids.len() {
                return Err(TtdeError::Shape(format!(
                    "{} bases for latent dimension {}",
                    b.len(),
                    grids.len()
                )));
            }
            (b.clone(), vec![MeanField::Uniform; b.len()])
        }
    };
    let c = fit(&latent, &bases, opts.alpha, &opts.compress)?;
    let model = deconvolve(&c, opts.alpha, 0.0, &bases, &grids, &mean_field)?;
    let model = match pca {
        Some(p) => model.with_pca(p.map())?,
        None => model,
    };
    model.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::{Algo, Ranks};
    use rand::Rng;

    fn planted(n: usize, seed: u64) -> SampleSet {
        // 2-dim subspace of R^4 through an offset
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = [0.5, 0.5, 0.5, 0.5];
        let b2 = [0.5, -0.5, 0.5, -0.5];
        let mut data = Vec::with_capacity(4 * n);
        for _ in 0..n {
            let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
            for k in 0..4 {
                data.push(0.3 + u * b1[k] + v * b2[k]);
            }
        }
        SampleSet::with_bounding_box(data, 4, 0.1, 0.0).unwrap()
    }

    #[test]
    fn planted_subspace_is_recovered() {
        let s = planted(500, 1);
        let p = pca_fit(&s, 2).unwrap();
        assert!((p.q.transpose() * &p.q - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        let m = p.map();
        for i in 0..s.len() {
            let x = s.row(i);
            let back = m.from_latent(&m.to_latent(x));
            let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-8);
        }
        assert!(p.eigvals[0] >= p.eigvals[1]);
    }

    #[test]
    fn full_rotation_is_isometry() {
        let s = planted(50, 2);
        let m = pca_fit(&s, 4).unwrap().map();
        let (a, b) = (s.row(3), s.row(7));
        let (za, zb) = (m.to_latent(a), m.to_latent(b));
        let dx: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let dz: f64 = za.iter().zip(&zb).map(|(x, y)| (x - y).powi(2)).sum();
        assert!((dx - dz).abs() < 1e-12);
    }

    #[test]
    fn streaming_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scales = [3.0, 2.0, 1.0, 0.5, 0.2];
        let data: Vec<f64> = (0..2000)
            .flat_map(|_| scales.map(|sc| sc * rng.random_range(-1.0..1.0)))
            .collect();
        let s = SampleSet::with_bounding_box(data, 5, 0.1, 0.0).unwrap();
        let exact = pca_fit(&s, 2).unwrap();
        let stream = pca_fit_streaming(&s, 2, 200, 3).unwrap();
        assert!(subspace_angle(&exact.q, &stream.q) < 1e-3);
        for (a, b) in exact.eigvals.iter().zip(&stream.eigvals) {
            assert!((a - b).abs() < 1e-6 * a);
        }
    }

    #[test]
    fn pca_rejects_bad_arguments() {
        let s = planted(20, 3);
        assert!(pca_fit(&s, 5).is_err());
        let flat = SampleSet::with_uniform_box(vec![0.2; 12], 3, GridSpec::symmetric(1.0, 0.1).unwrap()).unwrap();
        assert!(matches!(pca_fit(&flat, 2), Err(TtdeError::Degenerate(_))));
    }

    #[test]
    fn kde_mass_and_uniform_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let grid = GridSpec::new(0.0, 1.0, 0.02).unwrap();
        let k = kde1d(&x, &grid, None).unwrap();
        let mass: f64 = k.density.iter().sum::<f64>() * grid.mesh;
        assert!((mass - 1.0).abs() < 1e-12);
        let sup = k.density.iter().fold(0.0_f64, |m, v| m.max((v - 1.0).abs()));
        assert!(sup < 0.05, "sup deviation {sup}");
        assert!(kde1d(&[0.4; 10], &grid, None).is_err());
    }

    #[test]
    fn kde_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..5000)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|v: f64| (0.5 * v).clamp(-1.9, 1.9))
            .collect();
        let grid = GridSpec::symmetric(2.0, 0.05).unwrap();
        let k = kde1d(&x, &grid, None).unwrap();
        let b = orthonormalize_wrt(&grid, &k.density, 6).unwrap();
        let g = crate::basis::gram_check(&b, &grid);
        assert!((g - DMatrix::identity(6, 6)).abs().max() < 1e-8);
    }

    #[test]
    fn identity_pipeline_equals_plain_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<f64> = (0..600).map(|_| rng.random_range(-0.9..0.9)).collect();
        let grid = GridSpec::symmetric(1.0, 0.1).unwrap();
        let s = SampleSet::with_uniform_box(data, 3, grid).unwrap();
        let bases = vec![BasisFamily::fourier(5, 1.0).unwrap(); 3];
        let spec = CompressSpec::new(Algo::SvdFast, Ranks::Uniform(2));
        let opts = GeneralFit {
            latent_dim: 3,
            n: 5,
            alpha: 0.3,
            compress: spec.clone(),
            rotation: Rotation::Identity,
            marginals: Marginals::Given(bases.clone()),
            mesh: 0.1,
            pad: 0.0,
        };
        let general = fit_general(&s, &opts).unwrap();
        let c = fit(&s, &bases, 0.3, &spec).unwrap();
        let plain = deconvolve(&c, 0.3, 0.0, &bases, &[grid; 3], &[MeanField::Uniform, MeanField::Uniform, MeanField::Uniform])
            .unwrap()
            .normalize()
            .unwrap();
        for x in [[0.0, 0.1, -0.3], [0.7, -0.5, 0.2]] {
            assert!((general.eval_point(&x).unwrap() - plain.eval_point(&x).unwrap()).abs() < 1e-8);
        }
    }
}

//! Fitted densities: evaluation, marginals, normalization, moments, and
//! conditional sampling.
//!
//! A model stores deconvolved coefficients `c`, so that
//! `p̃(z) = Z⁻¹ Π_j μ_j(z_j) · Σ_l c(l) Π_j φ_{l_j}(z_j)`.
//! All integrals use the midpoint rule on each dimension's grid; the sampler
//! draws from the piecewise-constant density that takes the node value on
//! every cell, so quadrature moments and sample moments describe one law.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisFamily, GridSpec};
use crate::error::{Result, TtdeError};
use crate::estimator::SampleSet;
use crate::tt::{Core, TensorTrain};

/// Reference marginal `μ_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanField {
    /// `1 / (hi − lo)` on the grid interval.
    Uniform,
    /// Node values on the dimension grid, linearly interpolated.
    Tabulated { density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub basis: BasisFamily,
    pub grid: GridSpec,
    pub mean_field: MeanField,
}

impl Dimension {
    pub fn new(basis: BasisFamily, grid: GridSpec, mean_field: MeanField) -> Result<Self> {
        let (lo, hi) = basis.domain();
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        if (grid.lo - lo).abs() > tol || (grid.hi - hi).abs() > tol {
            return Err(TtdeError::Shape(format!(
                "grid [{}, {}] differs from basis domain [{lo}, {hi}]",
                grid.lo, grid.hi
            )));
        }
        if let MeanField::Tabulated { density } = &mean_field {
            if density.len() != grid.points() {
                return Err(TtdeError::Shape(format!(
                    "mean-field has {} values for {} nodes",
                    density.len(),
                    grid.points()
                )));
            }
        }
        Ok(Self {
            basis,
            grid,
            mean_field,
        })
    }

    pub fn mu(&self, x: f64) -> f64 {
        match &self.mean_field {
            MeanField::Uniform => 1.0 / self.grid.width(),
            MeanField::Tabulated { density } => self.grid.interpolate(density, x),
        }
    }

    /// `μ(x) φ_l(x)` for all `l`.
    fn weighted_basis(&self, x: f64, out: &mut [f64]) {
        self.basis.eval_into(x, out);
        let m = self.mu(x);
        out.iter_mut().for_each(|v| *v *= m);
    }

    /// `Σ_k w_k μ(g_k) φ_l(g_k)` for a per-node weight.
    fn quadrature_vector(&self, w: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        let n = self.basis.n();
        let mut acc = vec![0.0; n];
        let mut phi = vec![0.0; n];
        for k in 0..self.grid.points() {
            let g = self.grid.node(k);
            self.weighted_basis(g, &mut phi);
            let wk = w(k, g);
            for (a, p) in acc.iter_mut().zip(&phi) {
                *a += wk * p;
            }
        }
        acc
    }
}

/// Affine map `z = Qᵀ (x − center)` applied before evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaMap {
    pub q: DMatrix<f64>,
    pub center: Vec<f64>,
}

impl PcaMap {
    pub fn to_latent(&self, x: &[f64]) -> Vec<f64> {
        let c = DVector::from_iterator(x.len(), x.iter().zip(&self.center).map(|(a, b)| a - b));
        self.q.tr_mul(&c).iter().copied().collect()
    }

    pub fn from_latent(&self, z: &[f64]) -> Vec<f64> {
        let v = &self.q * DVector::from_column_slice(z);
        v.iter().zip(&self.center).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    coeff: TensorTrain,
    dims: Vec<Dimension>,
    pub alpha: f64,
    pub lambda: f64,
    pca: Option<PcaMap>,
    norm_const: f64,
}

/// Per-run sampler statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerDiagnostics {
    /// Sum over all conditionals of the clipped negative mass, as a fraction
    /// of the absolute mass of that conditional.
    pub clipped_mass_total: f64,
    pub count: usize,
}

impl SamplerDiagnostics {
    pub fn clipped_per_sample(&self) -> f64 {
        self.clipped_mass_total / self.count as f64
    }
}

/// Running state of one autoregressive draw.
#[derive(Debug, Clone)]
pub struct ConditionalSamplerState {
    pub left_message: Vec<f64>,
    pub clipped_mass_total: f64,
}

impl DensityModel {
    pub fn new(coeff: TensorTrain, dims: Vec<Dimension>, alpha: f64, lambda: f64) -> Result<Self> {
        if coeff.d() != dims.len() {
            return Err(TtdeError::Shape(format!(
                "{} dimensions for a train of order {}",
                dims.len(),
                coeff.d()
            )));
        }
        for (j, (c, dim)) in coeff.cores().iter().zip(&dims).enumerate() {
            if c.mode_size() != dim.basis.n() {
                return Err(TtdeError::Shape(format!(
                    "mode {j}: core size {} vs basis size {}",
                    c.mode_size(),
                    dim.basis.n()
                )));
            }
        }
        Ok(Self {
            coeff,
            dims,
            alpha,
            lambda,
            pca: None,
            norm_const: 1.0,
        })
    }

    pub fn with_pca(mut self, pca: PcaMap) -> Result<Self> {
        if pca.q.ncols() != self.d() || pca.center.len() != pca.q.nrows() {
            return Err(TtdeError::Shape(format!(
                "PCA map {}x{} for a latent dimension {}",
                pca.q.nrows(),
                pca.q.ncols(),
                self.d()
            )));
        }
        self.pca = Some(pca);
        Ok(self)
    }

    pub fn with_norm_const(mut self, z: f64) -> Self {
        self.norm_const = z;
        self
    }

    /// Latent dimension (the order of the coefficient train).
    pub fn d(&self) -> usize {
        self.coeff.d()
    }

    /// Dimension of evaluation points and samples.
    pub fn output_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.d(), |p| p.q.nrows())
    }

    pub fn coeff(&self) -> &TensorTrain {
        &self.coeff
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn pca(&self) -> Option<&PcaMap> {
        self.pca.as_ref()
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Density in latent coordinates.
    pub fn eval_latent(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.d() {
            return Err(TtdeError::Shape(format!(
                "point of length {} for a density of order {}",
                z.len(),
                self.d()
            )));
        }
        let mut msg = vec![1.0];
        let mut phi = Vec::new();
        for (j, ((core, dim), &x)) in self.coeff.cores().iter().zip(&self.dims).zip(z).enumerate() {
            if !dim.grid.contains(x) {
                return Err(TtdeError::OutOfDomain { dim: j, count: 1 });
            }
            phi.resize(dim.basis.n(), 0.0);
            dim.weighted_basis(x, &mut phi);
            let (r, n, rr) = core.shape();
            let data = core.data();
            let mut next = vec![0.0; rr];
            for (a, m) in msg.iter().enumerate().take(r) {
                for (l, p) in phi.iter().enumerate().take(n) {
                    let w = m * p;
                    let base = (a * n + l) * rr;
                    for (b, o) in next.iter_mut().enumerate() {
                        *o += w * data[base + b];
                    }
                }
            }
            msg = next;
        }
        Ok(msg[0] / self.norm_const)
    }

    /// `p̃(x) = Z⁻¹ p̃_z(Qᵀ(x − center))`; raw value, possibly negative.
    pub fn eval_point(&self, x: &[f64]) -> Result<f64> {
        match &self.pca {
            Some(p) => {
                if x.len() != p.q.nrows() {
                    return Err(TtdeError::Shape(format!(
                        "point of length {} for a {}-dimensional density",
                        x.len(),
                        p.q.nrows()
                    )));
                }
                self.eval_latent(&p.to_latent(x))
            }
            None => self.eval_latent(x),
        }
    }

    /// Core `j` tabulated at the grid nodes, `(r, G, r')`, each node scaled by `scale`.
    pub fn grid_core(&self, j: usize, scale: f64) -> Result<Core> {
        let dim = &self.dims[j];
        let core = self.coeff.core(j);
        let (r, n, rr) = core.shape();
        let g = dim.grid.points();
        let mut out = Core::zeros(r, g, rr);
        let mut phi = vec![0.0; n];
        for k in 0..g {
            dim.weighted_basis(dim.grid.node(k), &mut phi);
            phi.iter_mut().for_each(|v| *v *= scale);
            let slice = core.contract_mode(&phi);
            for a in 0..r {
                for b in 0..rr {
                    out.set(a, k, b, slice[(a, b)]);
                }
            }
        }
        Ok(out)
    }

    /// Node values as a TT over the grids; with `sqrt_mesh` every mode is
    /// scaled by `√mesh` so that `tt_inner` is the midpoint-rule L² product.
    pub fn grid_tt(&self, sqrt_mesh: bool) -> Result<TensorTrain> {
        let mut cores = Vec::with_capacity(self.d());
        for j in 0..self.d() {
            let s = if sqrt_mesh { self.dims[j].grid.mesh.sqrt() } else { 1.0 };
            cores.push(self.grid_core(j, s)?);
        }
        let mut t = TensorTrain::new(cores)?;
        t.scale(1.0 / self.norm_const);
        Ok(t)
    }

    fn quadrature_matrices(&self, w: impl Fn(&Dimension, usize, f64) -> f64) -> Vec<DMatrix<f64>> {
        self.coeff
            .cores()
            .iter()
            .zip(&self.dims)
            .map(|(core, dim)| {
                let v = dim.quadrature_vector(|k, g| w(dim, k, g));
                core.contract_mode(&v)
            })
            .collect()
    }

    fn mass_matrices(&self) -> Vec<DMatrix<f64>> {
        self.quadrature_matrices(|dim, _, _| dim.grid.mesh)
    }

    /// Grid-quadrature integral of the coefficient part (independent of `Z`).
    fn raw_integral(&self) -> f64 {
        self.mass_matrices()
            .into_iter()
            .fold(DMatrix::from_element(1, 1, 1.0), |acc, m| acc * m)[(0, 0)]
    }

    /// Integral of the model over its box.
    pub fn integral(&self) -> f64 {
        self.raw_integral() / self.norm_const
    }

    /// Sets `Z` so that the grid-quadrature integral is one.
    pub fn normalize(mut self) -> Result<Self> {
        let raw = self.raw_integral();
        if !(raw > 0.0) || !raw.is_finite() {
            return Err(TtdeError::Numerical(format!(
                "cannot normalize a density with integral {raw}"
            )));
        }
        self.norm_const = raw;
        Ok(self)
    }

    /// Density of the first `k` latent coordinates.
    pub fn marginal(&self, k: usize) -> Result<Self> {
        let d = self.d();
        if k == 0 || k > d {
            return Err(TtdeError::OutOfRange(format!("marginal over {k} of {d} dims")));
        }
        if k == d {
            let mut m = self.clone();
            m.pca = None;
            return Ok(m);
        }
        let mass = self.mass_matrices();
        let mut msg = DMatrix::from_element(1, 1, 1.0);
        for m in mass[k..].iter().rev() {
            msg = m * msg;
        }
        let mut cores: Vec<Core> = self.coeff.cores()[..k].to_vec();
        let last = &self.coeff.cores()[k - 1];
        let (r, n, rr) = last.shape();
        let mut absorbed = Core::zeros(r, n, 1);
        for a in 0..r {
            for i in 0..n {
                let v: f64 = (0..rr).map(|b| last.get(a, i, b) * msg[(b, 0)]).sum();
                absorbed.set(a, i, 0, v);
            }
        }
        cores[k - 1] = absorbed;
        Ok(Self {
            coeff: TensorTrain::new(cores)?,
            dims: self.dims[..k].to_vec(),
            alpha: self.alpha,
            lambda: self.lambda,
            pca: None,
            norm_const: self.norm_const,
        })
    }

    /// First and second moments `(E[x], E[x xᵀ])` of the normalized model,
    /// under the piecewise-constant cell law used by the sampler.
    pub fn moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.d();
        let s0 = self.mass_matrices();
        let s1 = self.quadrature_matrices(|dim, _, g| dim.grid.mesh * g);
        let s2 = self.quadrature_matrices(|dim, _, g| {
            let h = dim.grid.mesh;
            h * (g * g + h * h / 12.0)
        });
        // prefix[j] = Π_{m<j} S0_m (1 × r_j), suffix[j] = Π_{m≥j} S0_m (r_j × 1)
        let mut prefix = vec![DMatrix::from_element(1, 1, 1.0)];
        for m in &s0 {
            let next = prefix.last().expect("nonempty") * m;
            prefix.push(next);
        }
        let mut suffix = vec![DMatrix::from_element(1, 1, 1.0); d + 1];
        for j in (0..d).rev() {
            suffix[j] = &s0[j] * &suffix[j + 1];
        }
        let total = prefix[d][(0, 0)];
        let mut mean = vec![0.0; d];
        let mut second = DMatrix::zeros(d, d);
        for a in 0..d {
            mean[a] = (&prefix[a] * &s1[a] * &suffix[a + 1])[(0, 0)] / total;
            second[(a, a)] = (&prefix[a] * &s2[a] * &suffix[a + 1])[(0, 0)] / total;
            let mut left = &prefix[a] * &s1[a];
            for b in a + 1..d {
                let v = (&left * &s1[b] * &suffix[b + 1])[(0, 0)] / total;
                second[(a, b)] = v;
                second[(b, a)] = v;
                left *= &s0[b];
            }
        }
        match &self.pca {
            None => (mean, second),
            Some(p) => {
                let m = DVector::from_column_slice(&mean);
                let c = DVector::from_column_slice(&p.center);
                let qm = &p.q * &m;
                let x_mean = &qm + &c;
                let x_second = &p.q * second * p.q.transpose()
                    + &qm * c.transpose()
                    + &c * qm.transpose()
                    + &c * c.transpose();
                (x_mean.iter().copied().collect(), x_second)
            }
        }
    }

    /// `E[x xᵀ]` under the model.
    pub fn moment2(&self) -> DMatrix<f64> {
        self.moments().1
    }

    /// Autoregressive draws on the grids; see the module docs for the law.
    pub fn conditional_sample(&self, count: usize, seed: u64) -> Result<(SampleSet, SamplerDiagnostics)> {
        if count == 0 {
            return Err(TtdeError::InvalidParameter("sample count must be positive".into()));
        }
        let d = self.d();
        let tabs: Vec<Core> = (0..d).map(|j| self.grid_core(j, 1.0)).collect::<Result<_>>()?;
        let mass = self.mass_matrices();
        // rights[j]: integral of cores j.. (length r_j, the left rank of core j)
        let mut rights = vec![DVector::from_element(1, 1.0); d + 1];
        for j in (0..d).rev() {
            rights[j] = &mass[j] * &rights[j + 1];
        }
        // U_j[k] = T_j(k) rights[j+1], a G × r_{j-1} table
        let tables: Vec<DMatrix<f64>> = tabs
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let (r, g, rr) = t.shape();
                DMatrix::from_fn(g, r, |k, a| (0..rr).map(|b| t.get(a, k, b) * rights[j + 1][b]).sum())
            })
            .collect();

        let mut out = Vec::with_capacity(count * self.output_dim());
        let mut clipped = 0.0;
        let mut weights = Vec::new();
        let mut z = vec![0.0; d];
        for s in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut state = ConditionalSamplerState {
                left_message: vec![1.0],
                clipped_mass_total: 0.0,
            };
            for j in 0..d {
                let grid = &self.dims[j].grid;
                let table = &tables[j];
                let g = table.nrows();
                weights.clear();
                let (mut pos, mut neg) = (0.0, 0.0);
                for k in 0..g {
                    let v: f64 = state
                        .left_message
                        .iter()
                        .enumerate()
                        .map(|(a, m)| m * table[(k, a)])
                        .sum();
                    if v > 0.0 {
                        pos += v;
                        weights.push(pos);
                    } else {
                        neg -= v;
                        weights.push(pos);
                    }
                }
                if !(pos > 0.0) || !pos.is_finite() {
                    return Err(TtdeError::Numerical(format!(
                        "conditional of dimension {j} has no positive mass (sample {s})"
                    )));
                }
                state.clipped_mass_total += neg / (pos + neg);
                let u: f64 = rng.random::<f64>() * pos;
                let k = weights.partition_point(|c| *c <= u).min(g - 1);
                let jitter: f64 = rng.random();
                z[j] = grid.lo + (k as f64 + jitter) * grid.mesh;
                // ℓ ← ℓ T_j(k), rescaled
                let t = &tabs[j];
                let (r, _, rr) = t.shape();
                let mut next = vec![0.0; rr];
                for (a, m) in state.left_message.iter().enumerate().take(r) {
                    for (b, o) in next.iter_mut().enumerate() {
                        *o += m * t.get(a, k, b);
                    }
                }
                let scale = next.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
                if scale > 0.0 {
                    next.iter_mut().for_each(|v| *v /= scale);
                }
                state.left_message = next;
            }
            clipped += state.clipped_mass_total;
            match &self.pca {
                Some(p) => out.extend(p.from_latent(&z)),
                None => out.extend_from_slice(&z),
            }
        }
        debug!("sampled {count} points, clipped mass per sample {:.3e}", clipped / count as f64);
        let set = match &self.pca {
            None => SampleSet::new(out, d, self.dims.iter().map(|dim| dim.grid).collect())?,
            Some(p) => SampleSet::with_bounding_box(out, p.q.nrows(), self.dims[0].grid.mesh, 0.0)?,
        };
        Ok((
            set,
            SamplerDiagnostics {
                clipped_mass_total: clipped,
                count,
            },
        ))
    }
}

/// `(1/N) Xᵀ X`.
pub fn sample_moment2(s: &SampleSet) -> DMatrix<f64> {
    let d = s.d();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..s.len() {
        let x = s.row(i);
        for a in 0..d {
            for b in a..d {
                g[(a, b)] += x[a] * x[b];
            }
        }
    }
    let inv = 1.0 / s.len() as f64;
    for a in 0..d {
        for b in a..d {
            let v = g[(a, b)] * inv;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

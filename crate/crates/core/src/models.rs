//! Synthetic laws: the Gaussian mixture with its exact TT truth, and
//! Ginzburg–Landau Boltzmann densities sampled by Langevin dynamics.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, GridSpec};
use crate::density::{DensityModel, Dimension, MeanField};
use crate::error::{Result, TtdeError};
use crate::estimator::SampleSet;
use crate::tt::{Core, TensorTrain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmSpec {
    pub d: usize,
    pub half_width: f64,
    pub mesh: f64,
    pub sigmas: Vec<f64>,
    pub outer_weights: Vec<f64>,
    pub means: Vec<f64>,
    pub inner_weights: Vec<f64>,
}

/// One isotropic component `N(mean·𝟙, σ² I)` with its mixture weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmComponent {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

impl GmSpec {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            half_width: 1.5,
            mesh: 0.1,
            sigmas: vec![0.18, 0.20, 0.22],
            outer_weights: vec![1.0 / 6.0, 1.0 / 3.0, 0.5],
            means: vec![-0.5, 0.5],
            inner_weights: vec![2.0 / 3.0, 1.0 / 3.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sums = [self.outer_weights.iter().sum::<f64>(), self.inner_weights.iter().sum::<f64>()];
        if self.d == 0
            || sums.iter().any(|s| (s - 1.0).abs() > 1e-12)
            || self.sigmas.len() != self.outer_weights.len()
            || self.means.len() != self.inner_weights.len()
            || self.sigmas.iter().any(|s| !(*s > 0.0))
        {
            return Err(TtdeError::InvalidParameter(format!("invalid mixture {self:?}")));
        }
        GridSpec::symmetric(self.half_width, self.mesh).map(|_| ())
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::symmetric(self.half_width, self.mesh).expect("validated grid")
    }

    /// Components in (outer, inner) order, weights as drawn before truncation.
    pub fn components(&self) -> Vec<GmComponent> {
        let mut out = Vec::new();
        for (s, wo) in self.sigmas.iter().zip(&self.outer_weights) {
            for (m, wi) in self.means.iter().zip(&self.inner_weights) {
                out.push(GmComponent {
                    weight: wo * wi,
                    mean: *m,
                    sigma: *s,
                });
            }
        }
        out
    }

    /// Component weights of the law restricted to the box: rejecting whole
    /// vectors reweights component `c` by its box mass `Z_c^d`.
    pub fn truncated_components(&self) -> Vec<GmComponent> {
        let comps = self.components();
        let raw: Vec<f64> = comps
            .iter()
            .map(|c| c.weight * gaussian_box_mass(c.mean, c.sigma, self.half_width).powi(self.d as i32))
            .collect();
        let total: f64 = raw.iter().sum();
        comps
            .iter()
            .zip(raw)
            .map(|(c, w)| GmComponent { weight: w / total, ..*c })
            .collect()
    }
}

const QUAD_INTERVALS: usize = 6000;

/// Composite Simpson rule on `[-L, L]`.
fn simpson(half_width: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = QUAD_INTERVALS;
    let h = 2.0 * half_width / n as f64;
    let mut acc = f(-half_width) + f(half_width);
    for k in 1..n {
        let x = -half_width + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

fn gaussian_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let u = (x - mean) / sigma;
    (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn gaussian_box_mass(mean: f64, sigma: f64, half_width: f64) -> f64 {
    simpson(half_width, |x| gaussian_pdf(x, mean, sigma))
}

/// Draws `n` points; a draw leaving the box is discarded whole and redrawn.
pub fn gm_sample(spec: &GmSpec, n: usize, seed: u64) -> Result<SampleSet> {
    Ok(gm_sample_labeled(spec, n, seed)?.0)
}

/// As [`gm_sample`], also returning the outer (σ) component of every draw.
pub fn gm_sample_labeled(spec: &GmSpec, n: usize, seed: u64) -> Result<(SampleSet, Vec<usize>)> {
    spec.validate()?;
    if n == 0 {
        return Err(TtdeError::InvalidParameter("sample count must be positive".into()));
    }
    let d = spec.d;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    let pick = |w: &[f64], u: f64| -> usize {
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += wk;
            if u < acc {
                return k;
            }
        }
        w.len() - 1
    };
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        loop {
            let a = pick(&spec.outer_weights, rng.random());
            let b = pick(&spec.inner_weights, rng.random());
            let (sigma, mean) = (spec.sigmas[a], spec.means[b]);
            for v in x.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = mean + sigma * z;
            }
            if x.iter().all(|v| v.abs() <= spec.half_width) {
                data.extend_from_slice(&x);
                labels.push(a);
                break;
            }
        }
    }
    Ok((SampleSet::with_uniform_box(data, d, spec.grid())?, labels))
}

/// Exact rank-`C` TT with the given per-component vectors and weights.
fn separable_sum(weights: &[f64], vectors: &[Vec<f64>], d: usize) -> Result<TensorTrain> {
    let c = weights.len();
    let n = vectors[0].len();
    if d == 1 {
        let mut v = vec![0.0; n];
        for (w, vc) in weights.iter().zip(vectors) {
            for (o, x) in v.iter_mut().zip(vc) {
                *o += w * x;
            }
        }
        return TensorTrain::rank_one(&[v]);
    }
    let mut cores = Vec::with_capacity(d);
    for j in 0..d {
        let (r, rr) = (if j == 0 { 1 } else { c }, if j + 1 == d { 1 } else { c });
        let mut core = Core::zeros(r, n, rr);
        for k in 0..c {
            let (a, b) = (if j == 0 { 0 } else { k }, if j + 1 == d { 0 } else { k });
            let s = if j == 0 { weights[k] } else { 1.0 };
            for i in 0..n {
                core.set(a, i, b, s * vectors[k][i]);
            }
        }
        cores.push(core);
    }
    TensorTrain::new(cores)
}

/// Coefficient train `c(l) = ∫ Π φ_{l_j} p*` of the box-truncated mixture,
/// for families orthonormal under a uniform mean-field on the box.
pub fn gm_truth_tt(spec: &GmSpec, bases: &[BasisFamily]) -> Result<TensorTrain> {
    spec.validate()?;
    if bases.len() != spec.d {
        return Err(TtdeError::Shape(format!("{} bases for d={}", bases.len(), spec.d)));
    }
    let b = &bases[0];
    if bases.iter().any(|x| x != b) {
        return Err(TtdeError::InvalidParameter("the mixture truth needs one shared basis".into()));
    }
    let (lo, hi) = b.domain();
    if (lo + spec.half_width).abs() > 1e-12 || (hi - spec.half_width).abs() > 1e-12 {
        return Err(TtdeError::Shape(format!("basis domain [{lo}, {hi}] is not the mixture box")));
    }
    let comps = spec.truncated_components();
    let vectors: Vec<Vec<f64>> = comps
        .iter()
        .map(|c| {
            let z = gaussian_box_mass(c.mean, c.sigma, spec.half_width);
            (0..b.n())
                .map(|l| simpson(spec.half_width, |x| b.eval(x)[l] * gaussian_pdf(x, c.mean, c.sigma)) / z)
                .collect()
        })
        .collect();
    let weights: Vec<f64> = comps.iter().map(|c| c.weight).collect();
    separable_sum(&weights, &vectors, spec.d)
}

/// The projected truth as a model with a Fourier family of size `n`.
pub fn gm_truth_model(spec: &GmSpec, n: usize) -> Result<DensityModel> {
    let basis = BasisFamily::fourier(n, spec.half_width)?;
    let bases = vec![basis.clone(); spec.d];
    let coeff = gm_truth_tt(spec, &bases)?;
    let dims = (0..spec.d)
        .map(|_| Dimension::new(basis.clone(), spec.grid(), MeanField::Uniform))
        .collect::<Result<Vec<_>>>()?;
    DensityModel::new(coeff, dims, 1.0, 0.0)
}

/// Node values of the truncated mixture on the grid, unit grid mass.
pub fn gm_grid_truth(spec: &GmSpec) -> Result<TensorTrain> {
    spec.validate()?;
    let grid = spec.grid();
    let comps = spec.truncated_components();
    let vectors: Vec<Vec<f64>> = comps
        .iter()
        .map(|c| {
            let v: Vec<f64> = grid.nodes().iter().map(|x| gaussian_pdf(*x, c.mean, c.sigma)).collect();
            let mass = v.iter().sum::<f64>() * grid.mesh;
            v.iter().map(|x| x / mass).collect()
        })
        .collect();
    let weights: Vec<f64> = comps.iter().map(|c| c.weight).collect();
    separable_sum(&weights, &vectors, spec.d)
}

/// Energy and force of a Boltzmann law `e^{−βV}`.
pub trait Potential {
    fn dim(&self) -> usize;
    fn beta(&self) -> f64;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlKind {
    Gl1d { d: usize },
    Gl2d { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlSpec {
    pub kind: GlKind,
    pub lambda: f64,
    pub beta: f64,
    pub half_width: f64,
    pub mesh: f64,
}

impl GlSpec {
    /// Chain with zero ends.
    pub fn gl1d(d: usize) -> Self {
        Self {
            kind: GlKind::Gl1d { d },
            lambda: 0.03,
            beta: 1.0 / 8.0,
            half_width: 2.5,
            mesh: 0.05,
        }
    }

    /// `m × m` lattice with `+1` rows and `−1` columns on the frame.
    pub fn gl2d(m: usize) -> Self {
        Self {
            kind: GlKind::Gl2d { m },
            lambda: 0.1,
            beta: 1.0,
            half_width: 2.0,
            mesh: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let size_ok = match self.kind {
            GlKind::Gl1d { d } => d > 0,
            GlKind::Gl2d { m } => m > 0,
        };
        if !size_ok || !(self.lambda > 0.0) || !(self.beta > 0.0) {
            return Err(TtdeError::InvalidParameter(format!("invalid GL spec {self:?}")));
        }
        GridSpec::symmetric(self.half_width, self.mesh).map(|_| ())
    }

    pub fn h(&self) -> f64 {
        match self.kind {
            GlKind::Gl1d { d } => 1.0 / (1 + d) as f64,
            GlKind::Gl2d { m } => 1.0 / (1 + m) as f64,
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::symmetric(self.half_width, self.mesh).expect("validated grid")
    }

    fn bond(&self, a: f64, b: f64) -> f64 {
        let u = (b - a) / self.h();
        0.5 * self.lambda * u * u
    }

    fn site(&self, x: f64) -> f64 {
        let w = 1.0 - x * x;
        w * w / (4.0 * self.lambda)
    }

    fn site_grad(&self, x: f64) -> f64 {
        -x * (1.0 - x * x) / self.lambda
    }
}

/// Value at lattice site `(i, j)`, 1-based, including the frame.
fn gl2d_at(x: &[f64], m: usize, i: usize, j: usize) -> f64 {
    if i == 0 || i == m + 1 {
        1.0
    } else if j == 0 || j == m + 1 {
        -1.0
    } else {
        x[(i - 1) * m + (j - 1)]
    }
}

impl Potential for GlSpec {
    fn dim(&self) -> usize {
        match self.kind {
            GlKind::Gl1d { d } => d,
            GlKind::Gl2d { m } => m * m,
        }
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            GlKind::Gl1d { d } => {
                let at = |i: usize| if i == 0 || i == d + 1 { 0.0 } else { x[i - 1] };
                let bonds: f64 = (1..=d + 1).map(|i| self.bond(at(i - 1), at(i))).sum();
                bonds + x.iter().map(|v| self.site(*v)).sum::<f64>()
            }
            GlKind::Gl2d { m } => {
                let mut v = 0.0;
                for i in 1..=m + 1 {
                    for j in 1..=m {
                        v += self.bond(gl2d_at(x, m, i - 1, j), gl2d_at(x, m, i, j));
                    }
                }
                for i in 1..=m {
                    for j in 1..=m + 1 {
                        v += self.bond(gl2d_at(x, m, i, j - 1), gl2d_at(x, m, i, j));
                    }
                }
                v + x.iter().map(|s| self.site(*s)).sum::<f64>()
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let k = self.lambda / (self.h() * self.h());
        match self.kind {
            GlKind::Gl1d { d } => {
                let at = |i: usize| if i == 0 || i == d + 1 { 0.0 } else { x[i - 1] };
                for i in 1..=d {
                    out[i - 1] = k * (2.0 * at(i) - at(i - 1) - at(i + 1)) + self.site_grad(at(i));
                }
            }
            GlKind::Gl2d { m } => {
                for i in 1..=m {
                    for j in 1..=m {
                        let c = gl2d_at(x, m, i, j);
                        let nb = gl2d_at(x, m, i - 1, j)
                            + gl2d_at(x, m, i + 1, j)
                            + gl2d_at(x, m, i, j - 1)
                            + gl2d_at(x, m, i, j + 1);
                        out[(i - 1) * m + (j - 1)] = k * (4.0 * c - nb) + self.site_grad(c);
                    }
                }
            }
        }
    }
}

pub fn gl_potential(spec: &GlSpec, x: &[f64]) -> f64 {
    spec.value(x)
}

pub fn gl_gradient(spec: &GlSpec, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    spec.gradient(x, &mut g);
    g
}

/// `V = ‖x‖² / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub d: usize,
    pub beta: f64,
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.d
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Exact GL-1D node values on the grid as a TT of rank `G`, unit grid mass.
///
/// The chain energy splits into bond terms between neighbours and site
/// terms, so core `j` carries `exp(−β[bond(x_{j−1}, x_j) + site(x_j)])` with
/// the previous site value passed along the rank index.
pub fn gl1d_grid_truth(spec: &GlSpec) -> Result<TensorTrain> {
    spec.validate()?;
    let d = match spec.kind {
        GlKind::Gl1d { d } => d,
        GlKind::Gl2d { .. } => {
            return Err(TtdeError::InvalidParameter("grid truth is only built for the 1D chain".into()))
        }
    };
    let grid = spec.grid();
    let g = grid.points();
    let nodes = grid.nodes();
    let beta = spec.beta;
    let weight = |prev: f64, x: f64, last: bool| {
        let mut e = spec.bond(prev, x) + spec.site(x);
        if last {
            e += spec.bond(x, 0.0);
        }
        (-beta * e).exp()
    };
    let mut cores = Vec::with_capacity(d);
    for j in 0..d {
        let last = j + 1 == d;
        let (r, rr) = (if j == 0 { 1 } else { g }, if last { 1 } else { g });
        let mut core = Core::zeros(r, g, rr);
        for p in 0..r {
            let prev = if j == 0 { 0.0 } else { nodes[p] };
            for k in 0..g {
                core.set(p, k, if last { 0 } else { k }, weight(prev, nodes[k], last));
            }
        }
        cores.push(core);
    }
    let mut t = TensorTrain::new(cores)?;
    let mass = t.contract_all(&vec![vec![grid.mesh; g]; d])?;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(TtdeError::Numerical(format!("GL truth has grid mass {mass}")));
    }
    t.scale(1.0 / mass);
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    pub step: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
}

impl LangevinConfig {
    /// Step `5e-3 / β`, burn-in `10⁴`, thinning 10.
    pub fn for_beta(beta: f64, seed: u64) -> Self {
        Self {
            step: 5e-3 / beta,
            burn_in: 10_000,
            thinning: 10,
            chains: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || self.thinning == 0 || self.chains == 0 {
            return Err(TtdeError::InvalidParameter(format!("invalid Langevin config {self:?}")));
        }
        Ok(())
    }
}

const MAX_REDRAWS: usize = 1000;

/// Euler–Maruyama for `dX = −β∇V dt + √2 dW` on the box `[-L, L]^d`.
///
/// Chains start at the origin. A step that would leave the box is discarded
/// and redrawn with fresh noise.
pub fn langevin_sample(
    pot: &dyn Potential,
    cfg: &LangevinConfig,
    n: usize,
    domain: GridSpec,
) -> Result<SampleSet> {
    cfg.validate()?;
    if n == 0 {
        return Err(TtdeError::InvalidParameter("sample count must be positive".into()));
    }
    let d = pot.dim();
    let per_chain = n.div_ceil(cfg.chains);
    let drift = pot.beta() * cfg.step;
    let noise = (2.0 * cfg.step).sqrt();
    let mut data = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    let mut prop = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut redraws = 0usize;
    'chains: for c in 0..cfg.chains {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c as u64);
        x.iter_mut().for_each(|v| *v = 0.5 * (domain.lo + domain.hi));
        let total = cfg.burn_in + per_chain * cfg.thinning;
        for t in 1..=total {
            pot.gradient(&x, &mut grad);
            let mut tries = 0;
            loop {
                for ((p, xi), gi) in prop.iter_mut().zip(&x).zip(&grad) {
                    let z: f64 = rng.sample(StandardNormal);
                    *p = xi - drift * gi + noise * z;
                }
                if prop.iter().any(|v| !v.is_finite()) {
                    return Err(TtdeError::Numerical(format!(
                        "Langevin chain {c} diverged at step {t}; reduce the step size"
                    )));
                }
                if prop.iter().all(|v| domain.contains(*v)) {
                    break;
                }
                tries += 1;
                redraws += 1;
                if tries >= MAX_REDRAWS {
                    return Err(TtdeError::Numerical(format!(
                        "Langevin chain {c} cannot stay in the box at step {t}; reduce the step size"
                    )));
                }
            }
            std::mem::swap(&mut x, &mut prop);
            if t > cfg.burn_in && (t - cfg.burn_in).is_multiple_of(cfg.thinning) {
                data.extend_from_slice(&x);
                if data.len() == n * d {
                    break 'chains;
                }
            }
        }
    }
    debug!("Langevin: {n} samples, {redraws} redrawn steps");
    SampleSet::with_uniform_box(data, d, domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_weights_sum_to_one() {
        let spec = GmSpec::new(4);
        let w: f64 = spec.components().iter().map(|c| c.weight).sum();
        assert!((w - 1.0).abs() < 1e-15);
        let t: f64 = spec.truncated_components().iter().map(|c| c.weight).sum();
        assert!((t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampler_is_reproducible_and_in_box() {
        let spec = GmSpec::new(3);
        let a = gm_sample(&spec, 200, 7).unwrap();
        let b = gm_sample(&spec, 200, 7).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|v| v.abs() <= 1.5));
        assert_ne!(a.data(), gm_sample(&spec, 200, 8).unwrap().data());
    }

    #[test]
    fn one_dimensional_truth_matches_quadrature() {
        let spec = GmSpec::new(1);
        let b = BasisFamily::fourier(5, 1.5).unwrap();
        let t = gm_truth_tt(&spec, std::slice::from_ref(&b)).unwrap();
        // independent midpoint quadrature of the mixture density
        let comps = spec.truncated_components();
        let z: Vec<f64> = comps.iter().map(|c| gaussian_box_mass(c.mean, c.sigma, 1.5)).collect();
        let m = 200_000;
        let h = 3.0 / m as f64;
        for l in 0..5 {
            let mut acc = 0.0;
            for k in 0..m {
                let x = -1.5 + (k as f64 + 0.5) * h;
                let p: f64 = comps
                    .iter()
                    .zip(&z)
                    .map(|(c, zc)| c.weight * gaussian_pdf(x, c.mean, c.sigma) / zc)
                    .sum();
                acc += b.eval(x)[l] * p * h;
            }
            assert!((t.core(0).get(0, l, 0) - acc).abs() < 1e-10, "l={l}");
        }
    }

    #[test]
    fn truth_has_rank_six_and_unit_mass() {
        let spec = GmSpec::new(3);
        let m = gm_truth_model(&spec, 9).unwrap();
        assert_eq!(m.coeff().ranks(), vec![1, 6, 6, 1]);
        assert!((m.integral() - 1.0).abs() < 1e-6);
        let g = gm_grid_truth(&spec).unwrap();
        let mass = g.contract_all(&vec![vec![0.1; 30]; 3]).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gl1d_value_at_ones() {
        let spec = GlSpec::gl1d(2);
        // h = 1/3: bonds (1−0)², 0, (0−1)², each times λ/(2h²); sites vanish
        let expected = 2.0 * 0.5 * 0.03 * 9.0;
        assert!((gl_potential(&spec, &[1.0, 1.0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn gl1d_is_even() {
        let spec = GlSpec::gl1d(5);
        let x = [0.3, -1.2, 0.8, 2.0, -0.1];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((gl_potential(&spec, &x) - gl_potential(&spec, &neg)).abs() < 1e-12);
    }

    #[test]
    fn gl2d_by_hand_for_one_site() {
        // single interior site with neighbours +1, +1, −1, −1
        let spec = GlSpec::gl2d(1);
        let x: f64 = 0.4;
        let h2 = 0.25;
        let bonds = 0.05 * ((x - 1.0).powi(2) * 2.0 + (x + 1.0).powi(2) * 2.0) / h2;
        let site = (1.0 - x * x).powi(2) / 0.4;
        assert!((gl_potential(&spec, &[x]) - (bonds + site)).abs() < 1e-13);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [GlSpec::gl1d(6), GlSpec::gl2d(3)];
        for spec in cases {
            let d = spec.dim();
            let x: Vec<f64> = (0..d).map(|i| 0.9 * ((i as f64) * 1.7).sin()).collect();
            let g = gl_gradient(&spec, &x);
            let eps = 1e-5;
            for i in 0..d {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += eps;
                b[i] -= eps;
                let fd = (spec.value(&a) - spec.value(&b)) / (2.0 * eps);
                assert!((fd - g[i]).abs() < 1e-6, "{spec:?} i={i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn gl1d_truth_matches_brute_force() {
        let spec = GlSpec::gl1d(2);
        let t = gl1d_grid_truth(&spec).unwrap();
        let g = spec.grid();
        let mut z = 0.0;
        for a in 0..g.points() {
            for b in 0..g.points() {
                z += (-spec.beta * spec.value(&[g.node(a), g.node(b)])).exp() * g.mesh * g.mesh;
            }
        }
        for (a, b) in [(3, 50), (40, 61), (99, 0)] {
            let v = (-spec.beta * spec.value(&[g.node(a), g.node(b)])).exp() / z;
            assert!((t.entry(&[a, b]).unwrap() - v).abs() < 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn ornstein_uhlenbeck_covariance() {
        let pot = Quadratic { d: 2, beta: 1.0 };
        let cfg = LangevinConfig {
            step: 1e-2,
            burn_in: 500,
            thinning: 200,
            chains: 40,
            seed: 3,
        };
        let s = langevin_sample(&pot, &cfg, 20_000, GridSpec::symmetric(8.0, 0.1).unwrap()).unwrap();
        let g = crate::density::sample_moment2(&s);
        for a in 0..2 {
            // Euler bias 1/(1 − step/2) is 0.5%
            assert!((g[(a, a)] - 1.0).abs() < 0.05, "{}", g[(a, a)]);
        }
        assert!(g[(0, 1)].abs() < 0.05);
    }

    #[test]
    fn langevin_rejects_bad_config() {
        let pot = Quadratic { d: 1, beta: 1.0 };
        let mut cfg = LangevinConfig::for_beta(1.0, 0);
        cfg.thinning = 0;
        assert!(langevin_sample(&pot, &cfg, 10, GridSpec::symmetric(1.0, 0.1).unwrap()).is_err());
    }
}

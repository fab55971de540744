//! Univariate basis families, feature blocks, and grid quadrature.
//!
//! Every family is stored with its first function equal to the constant 1 and
//! orthonormal with respect to its own reference probability measure: the
//! uniform law on `[-L, L]` for Fourier, the uniform law on `[0, 1]` for
//! Legendre, and the tabulated weight for data-driven families.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtdeError};

/// Uniform cell grid on `[lo, hi]`; nodes sit at cell midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub mesh: f64,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, mesh: f64) -> Result<Self> {
        if !(hi > lo) || !(mesh > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(TtdeError::InvalidParameter(format!(
                "grid [{lo}, {hi}] with mesh {mesh}"
            )));
        }
        let cells = (hi - lo) / mesh;
        if (cells - cells.round()).abs() > 1e-6 * cells.max(1.0) {
            return Err(TtdeError::InvalidParameter(format!(
                "mesh {mesh} does not divide [{lo}, {hi}] evenly"
            )));
        }
        Ok(Self { lo, hi, mesh })
    }

    /// Symmetric grid on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, mesh: f64) -> Result<Self> {
        Self::new(-half_width, half_width, mesh)
    }

    pub fn points(&self) -> usize {
        ((self.hi - self.lo) / self.mesh).round() as usize
    }

    pub fn node(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.mesh
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points()).map(|k| self.node(k)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Linear interpolation of node values; constant beyond the outer nodes.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let g = values.len();
        let t = (x - self.lo) / self.mesh - 0.5;
        if t <= 0.0 {
            return values[0];
        }
        let k = t.floor() as usize;
        if k + 1 >= g {
            return values[g - 1];
        }
        let f = t - k as f64;
        if f == 0.0 {
            values[k]
        } else {
            (1.0 - f) * values[k] + f * values[k + 1]
        }
    }
}

/// Raw Fourier function, orthonormal under Lebesgue measure on `[-L, L]`.
pub fn fourier_eval(l: usize, x: f64, half_width: f64) -> Result<f64> {
    if l < 1 {
        return Err(TtdeError::InvalidParameter("basis index starts at 1".into()));
    }
    let big_l = half_width;
    Ok(if l == 1 {
        1.0 / (2.0 * big_l).sqrt()
    } else if l.is_multiple_of(2) {
        (l as f64 * PI * x / (2.0 * big_l)).cos() / big_l.sqrt()
    } else {
        ((l - 1) as f64 * PI * x / (2.0 * big_l)).sin() / big_l.sqrt()
    })
}

/// Orthonormal shifted Legendre polynomials on `[0, 1]`, `√(2l−1) P_{l−1}(2x−1)`.
fn legendre_fill(x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    let (mut p0, mut p1) = (1.0, t);
    for (k, o) in out.iter_mut().enumerate() {
        let p = if k == 0 {
            1.0
        } else if k == 1 {
            t
        } else {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
            p2
        };
        *o = p * ((2 * k + 1) as f64).sqrt();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    Fourier { half_width: f64 },
    Legendre,
    Tabulated {
        grid: GridSpec,
        /// `values[l][k]` is function `l` at node `k`.
        values: Vec<Vec<f64>>,
        /// Reference density at the nodes, unit mass on the grid.
        weight: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisFamily {
    kind: BasisKind,
    n: usize,
}

/// Measure used by [`integral_vector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Lebesgue,
    MeanField,
}

impl BasisFamily {
    pub fn fourier(n: usize, half_width: f64) -> Result<Self> {
        if n == 0 || !(half_width > 0.0) {
            return Err(TtdeError::InvalidParameter(format!(
                "fourier family with n={n}, L={half_width}"
            )));
        }
        Ok(Self {
            kind: BasisKind::Fourier { half_width },
            n,
        })
    }

    pub fn legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(TtdeError::InvalidParameter("n must be positive".into()));
        }
        Ok(Self {
            kind: BasisKind::Legendre,
            n,
        })
    }

    pub fn tabulated(grid: GridSpec, values: Vec<Vec<f64>>, weight: Vec<f64>) -> Result<Self> {
        let g = grid.points();
        if values.is_empty() || values.iter().any(|v| v.len() != g) || weight.len() != g {
            return Err(TtdeError::Shape(format!(
                "tabulated family needs n vectors of {g} node values"
            )));
        }
        Ok(Self {
            n: values.len(),
            kind: BasisKind::Tabulated {
                grid,
                values,
                weight,
            },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    /// Support interval of the family.
    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            BasisKind::Fourier { half_width } => (-half_width, *half_width),
            BasisKind::Legendre => (0.0, 1.0),
            BasisKind::Tabulated { grid, .. } => (grid.lo, grid.hi),
        }
    }

    /// Density of the reference measure at `x`.
    pub fn reference_density(&self, x: f64) -> f64 {
        match &self.kind {
            BasisKind::Fourier { half_width } => 0.5 / half_width,
            BasisKind::Legendre => 1.0,
            BasisKind::Tabulated { grid, weight, .. } => grid.interpolate(weight, x),
        }
    }

    /// Writes `φ_1(x), …, φ_n(x)` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n);
        match &self.kind {
            BasisKind::Fourier { half_width } => {
                let w = PI * x / (2.0 * half_width);
                out[0] = 1.0;
                let s2 = std::f64::consts::SQRT_2;
                for (k, o) in out.iter_mut().enumerate().skip(1) {
                    let l = k + 1;
                    *o = if l % 2 == 0 {
                        s2 * (l as f64 * w).cos()
                    } else {
                        s2 * ((l - 1) as f64 * w).sin()
                    };
                }
            }
            BasisKind::Legendre => legendre_fill(x, out),
            BasisKind::Tabulated { grid, values, .. } => {
                for (o, v) in out.iter_mut().zip(values) {
                    *o = grid.interpolate(v, x);
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.eval_into(x, &mut out);
        out
    }

    /// Factor that maps the stored functions back to the Lebesgue-orthonormal
    /// convention on the domain (`φ_stored / scale`).
    pub fn lebesgue_scale(&self) -> f64 {
        let (lo, hi) = self.domain();
        (hi - lo).sqrt()
    }

    /// Highest angular frequency present, if the family is trigonometric.
    fn max_frequency(&self) -> Option<f64> {
        match &self.kind {
            BasisKind::Fourier { half_width } if self.n > 1 => {
                let l = self.n;
                let top = if l.is_multiple_of(2) { l } else { l - 1 };
                Some(top as f64 * PI / (2.0 * half_width))
            }
            _ => None,
        }
    }
}

/// Midpoint-rule Gram matrix `∫ φ_l φ_m dμ` over `quad`, with μ the family's
/// reference measure.
pub fn gram_check(b: &BasisFamily, quad: &GridSpec) -> DMatrix<f64> {
    if let Some(omega) = b.max_frequency() {
        let per_period = 2.0 * PI / omega / quad.mesh;
        if per_period < 4.0 {
            warn!("quadrature resolves only {per_period:.2} points per shortest period");
        }
    }
    let n = b.n();
    let mut g = DMatrix::zeros(n, n);
    let mut phi = vec![0.0; n];
    for x in quad.nodes() {
        b.eval_into(x, &mut phi);
        let w = quad.mesh * b.reference_density(x);
        for l in 0..n {
            for m in 0..n {
                g[(l, m)] += w * phi[l] * phi[m];
            }
        }
    }
    g
}

/// `m(l) = ∫ φ_l dμ` on the family's domain.
pub fn integral_vector(b: &BasisFamily, measure: Measure) -> Vec<f64> {
    let n = b.n();
    match (&b.kind, measure) {
        (BasisKind::Fourier { .. } | BasisKind::Legendre, Measure::MeanField) => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        }
        (BasisKind::Fourier { half_width }, Measure::Lebesgue) => {
            // every non-constant function integrates to zero over full periods
            let mut e = vec![0.0; n];
            e[0] = 2.0 * half_width;
            e
        }
        (BasisKind::Legendre, Measure::Lebesgue) => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        }
        (
            BasisKind::Tabulated {
                grid,
                values,
                weight,
            },
            m,
        ) => values
            .iter()
            .map(|v| {
                v.iter()
                    .zip(weight)
                    .map(|(f, w)| {
                        let mu = if m == Measure::MeanField { *w } else { 1.0 };
                        grid.mesh * mu * f
                    })
                    .sum()
            })
            .collect(),
    }
}

/// Per-dimension matrix `Φ̃_j` of α-weighted basis values, row-major `N × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    data: Vec<f64>,
    rows: usize,
    n: usize,
    pub dim_index: usize,
    pub alpha: f64,
}

impl FeatureBlock {
    pub fn from_rows(data: Vec<f64>, rows: usize, n: usize, dim_index: usize, alpha: f64) -> Result<Self> {
        if data.len() != rows * n {
            return Err(TtdeError::Shape(format!(
                "feature block {rows}x{n} from {} values",
                data.len()
            )));
        }
        Ok(Self {
            data,
            rows,
            n,
            dim_index,
            alpha,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.n, &self.data)
    }

    /// Sub-block on the given sample rows.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureBlock {
        let mut data = Vec::with_capacity(idx.len() * self.n);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureBlock {
            data,
            rows: idx.len(),
            n: self.n,
            dim_index: self.dim_index,
            alpha: self.alpha,
        }
    }
}

/// Rows `[1, α φ_2(x_i), …, α φ_n(x_i)]`.
///
/// Samples outside the family's domain are rejected with the offender count.
pub fn feature_block(samples: &[f64], b: &BasisFamily, alpha: f64, dim_index: usize) -> Result<FeatureBlock> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(TtdeError::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let (lo, hi) = b.domain();
    let offenders = samples.iter().filter(|x| !(**x >= lo && **x <= hi)).count();
    if offenders > 0 {
        return Err(TtdeError::OutOfDomain {
            dim: dim_index,
            count: offenders,
        });
    }
    let n = b.n();
    let mut data = vec![0.0; samples.len() * n];
    for (row, x) in data.chunks_exact_mut(n).zip(samples) {
        b.eval_into(*x, row);
        row[0] = 1.0;
        for v in row.iter_mut().skip(1) {
            *v *= alpha;
        }
    }
    FeatureBlock::from_rows(data, samples.len(), n, dim_index, alpha)
}

/// Polynomial family orthonormal with respect to a tabulated weight,
/// built by modified Gram–Schmidt with one reorthogonalization pass.
///
/// Starting vectors are Legendre polynomials in the normalized grid
/// coordinate, which keeps the Gram–Schmidt input well conditioned.
pub fn orthonormalize_wrt(grid: &GridSpec, weight: &[f64], n: usize) -> Result<BasisFamily> {
    let g = grid.points();
    if weight.len() != g {
        return Err(TtdeError::Shape(format!(
            "weight has {} values for a grid of {g} nodes",
            weight.len()
        )));
    }
    if n == 0 {
        return Err(TtdeError::InvalidParameter("n must be positive".into()));
    }
    if weight.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(TtdeError::InvalidParameter("weight must be nonnegative".into()));
    }
    let wmax = weight.iter().fold(0.0_f64, |m, x| m.max(*x));
    let support = weight.iter().filter(|w| **w > 1e-14 * wmax).count();
    if wmax <= 0.0 || support < n {
        return Err(TtdeError::Degenerate(format!(
            "weight supported on {support} nodes cannot carry {n} orthonormal functions"
        )));
    }
    let mass: f64 = weight.iter().sum::<f64>() * grid.mesh;
    let w: Vec<f64> = weight.iter().map(|x| x / mass).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .zip(&w)
            .map(|((x, y), wk)| x * y * wk)
            .sum::<f64>()
            * grid.mesh
    };

    let mut leg = vec![0.0; n];
    let mut start: Vec<Vec<f64>> = vec![Vec::with_capacity(g); n];
    for x in grid.nodes() {
        legendre_fill((x - grid.lo) / grid.width(), &mut leg);
        for (s, v) in start.iter_mut().zip(&leg) {
            s.push(*v);
        }
    }

    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for mut v in start {
        let before = inner(&v, &v).sqrt();
        for _pass in 0..2 {
            for q in &out {
                let c = inner(&v, q);
                for (vk, qk) in v.iter_mut().zip(q) {
                    *vk -= c * qk;
                }
            }
        }
        let norm = inner(&v, &v).sqrt();
        if !(norm > 1e-10 * before) {
            return Err(TtdeError::Degenerate(format!(
                "weight is rank deficient at function {}",
                out.len() + 1
            )));
        }
        for vk in v.iter_mut() {
            *vk /= norm;
        }
        out.push(v);
    }
    // the constant must be exactly 1 where the mean-field is supported
    let sign = if out[0].iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for v in out[0].iter_mut() {
        *v *= sign;
    }
    BasisFamily::tabulated(*grid, out, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_reference_values() {
        assert!((fourier_eval(1, 0.0, 1.5).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((fourier_eval(2, 0.0, 1.5).unwrap() - 1.0 / 1.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(fourier_eval(3, 0.0, 2.0).unwrap(), 0.0);
        assert!(fourier_eval(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn stored_fourier_is_rescaled_raw() {
        let b = BasisFamily::fourier(6, 1.5).unwrap();
        let x = 0.37;
        let phi = b.eval(x);
        for (k, v) in phi.iter().enumerate() {
            let raw = fourier_eval(k + 1, x, 1.5).unwrap();
            assert!((v - raw * 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_gram_is_identity() {
        let b = BasisFamily::fourier(7, 1.5).unwrap();
        let g = gram_check(&b, &GridSpec::symmetric(1.5, 0.01).unwrap());
        assert!((g - DMatrix::identity(7, 7)).abs().max() < 1e-6);
    }

    #[test]
    fn legendre_gram_is_identity() {
        let b = BasisFamily::legendre(5).unwrap();
        let g = gram_check(&b, &GridSpec::new(0.0, 1.0, 1e-4).unwrap());
        assert!((g - DMatrix::identity(5, 5)).abs().max() < 1e-6);
        let one = gram_check(&BasisFamily::legendre(1).unwrap(), &GridSpec::new(0.0, 1.0, 0.1).unwrap());
        assert!((one[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feature_block_rows() {
        let b = BasisFamily::fourier(3, 1.5).unwrap();
        let f = feature_block(&[0.0], &b, 0.01, 0).unwrap();
        let expected = [1.0, 0.01 * 2f64.sqrt(), 0.0];
        for (a, e) in f.row(0).iter().zip(expected) {
            assert!((a - e).abs() < 1e-14);
        }
        let ones = feature_block(&[0.1, -0.4], &BasisFamily::fourier(1, 1.5).unwrap(), 1.0, 0).unwrap();
        assert_eq!(ones.data(), &[1.0, 1.0]);
        let zero_alpha = feature_block(&[0.1, -0.4, 1.2], &b, 0.0, 0).unwrap();
        let f2: f64 = zero_alpha.data().iter().map(|x| x * x).sum();
        assert_eq!(f2, 3.0);
    }

    #[test]
    fn feature_block_rejects_out_of_domain() {
        let b = BasisFamily::fourier(3, 1.0).unwrap();
        match feature_block(&[0.0, 1.5, -2.0], &b, 0.5, 4) {
            Err(TtdeError::OutOfDomain { dim, count }) => {
                assert_eq!((dim, count), (4, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mean_field_integral_vectors() {
        let b = BasisFamily::fourier(9, 1.5).unwrap();
        let e = integral_vector(&b, Measure::MeanField);
        // quadrature agrees with the closed form
        let grid = GridSpec::symmetric(1.5, 0.001).unwrap();
        for (l, el) in e.iter().enumerate() {
            let q: f64 = grid
                .nodes()
                .iter()
                .map(|x| b.eval(*x)[l] * grid.mesh / 3.0)
                .sum();
            assert!((q - el).abs() < 1e-10);
        }
        let leg = integral_vector(&BasisFamily::legendre(4).unwrap(), Measure::Lebesgue);
        assert_eq!(leg, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn orthonormalize_uniform_matches_legendre() {
        let grid = GridSpec::new(-1.0, 1.0, 0.001).unwrap();
        let w = vec![0.5; grid.points()];
        let b = orthonormalize_wrt(&grid, &w, 3).unwrap();
        let g = gram_check(&b, &grid);
        assert!((g - DMatrix::identity(3, 3)).abs().max() < 1e-8);
        for x in [-0.7, 0.0, 0.45] {
            let v = b.eval(x);
            assert!((v[0] - 1.0).abs() < 1e-12);
            assert!((v[1] - 3f64.sqrt() * x).abs() < 1e-5);
            let p2 = 0.5 * (3.0 * x * x - 1.0);
            assert!((v[2] - 5f64.sqrt() * p2).abs() < 1e-5);
        }
        assert_eq!(
            integral_vector(&b, Measure::MeanField)
                .iter()
                .map(|x| (x * 1e8).round() / 1e8)
                .collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn orthonormalize_rejects_point_mass() {
        let grid = GridSpec::new(-1.0, 1.0, 0.1).unwrap();
        let mut w = vec![0.0; grid.points()];
        w[4] = 5.0;
        w[5] = 5.0;
        assert!(matches!(
            orthonormalize_wrt(&grid, &w, 3),
            Err(TtdeError::Degenerate(_))
        ));
        let one = orthonormalize_wrt(&grid, &w, 1).unwrap();
        assert!((one.eval(0.0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let grid = GridSpec::new(0.0, 1.0, 0.25).unwrap();
        let v = [1.0, 3.0, 2.0, 5.0];
        for (k, x) in grid.nodes().iter().enumerate() {
            assert_eq!(grid.interpolate(&v, *x), v[k]);
        }
        assert_eq!(grid.interpolate(&v, 0.25), 2.0);
        assert_eq!(grid.interpolate(&v, 0.0), 1.0);
    }

    #[test]
    fn coefficient_map_is_invertible_on_small_grid() {
        // n functions sampled at 2n midpoint nodes have orthogonal columns
        for n in [3usize, 5, 9] {
            let b = BasisFamily::fourier(n, 1.0).unwrap();
            let grid = GridSpec::symmetric(1.0, 1.0 / n as f64).unwrap();
            let m = DMatrix::from_fn(2 * n, n, |k, l| b.eval(grid.node(k))[l]);
            let s = m.singular_values();
            let cond = s.max() / s.min();
            assert!((cond - 1.0).abs() < 1e-8, "n={n} cond={cond}");
        }
    }
}

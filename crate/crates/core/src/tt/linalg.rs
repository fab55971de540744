//! Deterministic dense factorizations shared by every compressor.
//!
//! All singular and eigen vectors leave this module sign-fixed: the entry of
//! largest magnitude is made positive (first occurrence wins on exact ties).
//! Two routes that compute the same subspace therefore produce the same
//! vectors, not just the same projector.

use nalgebra::DMatrix;

use crate::error::{Result, TtdeError};

/// Truncation and flooring rule applied by [`truncated_svd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdConvention {
    pub rank: usize,
    /// Singular values below `rel_singular_floor * sigma_max` are reported as zero.
    pub rel_singular_floor: f64,
}

impl SvdConvention {
    pub fn with_rank(rank: usize) -> Self {
        Self {
            rank,
            rel_singular_floor: 1e-12,
        }
    }
}

/// Top-`r` factors `M ≈ U diag(s) Vᵀ`; `U` is m×r and `V` is n×r.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, s) in self.singular_values.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TtdeError::NonFinite(what.to_string()))
    }
}

/// Index of the largest-magnitude entry; first occurrence on exact ties.
fn pivot_index<'a>(v: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (k, x) in v.enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = k;
        }
    }
    best
}

/// Flips the sign of column `c` so that its largest-magnitude entry is
/// positive. Returns `true` if a flip happened.
pub fn sign_fix_column(m: &mut DMatrix<f64>, c: usize) -> bool {
    let col = m.column(c);
    let p = pivot_index(col.iter());
    if col[p] < 0.0 {
        m.column_mut(c).neg_mut();
        true
    } else {
        false
    }
}

pub fn truncated_svd(m: &DMatrix<f64>, conv: &SvdConvention) -> Result<TruncatedSvd> {
    check_finite(m, "truncated_svd input")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if conv.rank == 0 || conv.rank > k {
        return Err(TtdeError::RankTooLarge {
            cut: 0,
            rank: conv.rank,
            available: k,
        });
    }
    let svd = m.clone().svd(true, true);
    let u_full = svd.u.ok_or_else(|| TtdeError::Numerical("SVD returned no U".into()))?;
    let vt_full = svd
        .v_t
        .ok_or_else(|| TtdeError::Numerical("SVD returned no Vᵀ".into()))?;
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let r = conv.rank;
    let mut u = DMatrix::zeros(rows, r);
    let mut v = DMatrix::zeros(cols, r);
    let mut s = Vec::with_capacity(r);
    let sigma_max = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    for (c, &src) in order.iter().take(r).enumerate() {
        u.set_column(c, &u_full.column(src));
        v.set_column(c, &vt_full.row(src).transpose());
        if sign_fix_column(&mut u, c) {
            v.column_mut(c).neg_mut();
        }
        let value = sv[src];
        s.push(if value < conv.rel_singular_floor * sigma_max {
            0.0
        } else {
            value
        });
    }
    Ok(TruncatedSvd {
        u,
        singular_values: s,
        v,
    })
}

/// Eigen-decomposition of `(A + Aᵀ)/2`, eigenvalues in nonincreasing order,
/// sign-fixed eigenvectors as columns.
///
/// Eigenvalues that agree to 1e-14 relative are ordered by lexicographic
/// comparison of their (sign-fixed) eigenvectors, largest first.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(TtdeError::Shape(format!(
            "sym_eigen expects a square matrix, got {rows}x{cols}"
        )));
    }
    check_finite(a, "sym_eigen input")?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vecs = eig.eigenvectors;
    for c in 0..rows {
        sign_fix_column(&mut vecs, c);
    }
    let vals = eig.eigenvalues;
    let scale = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    // runs of numerically tied eigenvalues are ordered by their eigenvectors
    let mut start = 0;
    while start < rows {
        let mut end = start + 1;
        while end < rows && (vals[order[end - 1]] - vals[order[end]]).abs() <= 1e-14 * scale {
            end += 1;
        }
        order[start..end].sort_by(|&x, &y| {
            let (cx, cy) = (vecs.column(x), vecs.column(y));
            cx.iter()
                .zip(cy.iter())
                .map(|(p, q)| q.total_cmp(p))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        start = end;
    }
    let mut sorted = DMatrix::zeros(rows, rows);
    let mut out = Vec::with_capacity(rows);
    for (c, &src) in order.iter().enumerate() {
        sorted.set_column(c, &vecs.column(src));
        out.push(vals[src]);
    }
    Ok((out, sorted))
}

/// Moore–Penrose inverse of a symmetric matrix: eigenvalues with
/// `|λ| < rel_tol * λ_max` are dropped.
pub fn pinv_sym(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(a)?;
    let lmax = vals.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(lmax > f64::MIN_POSITIVE) {
        return Err(TtdeError::Numerical(
            "pseudo-inverse of a numerically zero matrix".into(),
        ));
    }
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for (c, &l) in vals.iter().enumerate() {
        let inv = if l.abs() >= rel_tol * lmax { 1.0 / l } else { 0.0 };
        scaled.column_mut(c).scale_mut(inv);
    }
    let mut out = scaled * vecs.transpose();
    // symmetric by construction; remove rounding asymmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = m;
            out[(j, i)] = m;
        }
    }
    Ok(out)
}

/// Moore–Penrose inverse of a general matrix through its SVD.
pub fn pinv(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    check_finite(a, "pinv input")?;
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, x| m.max(*x));
    if !(smax > f64::MIN_POSITIVE) {
        return Err(TtdeError::Numerical(
            "pseudo-inverse of a numerically zero matrix".into(),
        ));
    }
    svd.pseudo_inverse(rel_tol * smax)
        .map_err(|e| TtdeError::Numerical(e.to_string()))
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns.
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // sin θ_max = ‖(I − A Aᵀ) B‖₂; acos of the cosines loses half the digits
    let resid = b - a * (a.transpose() * b);
    let s = resid.singular_values();
    s.iter().fold(0.0_f64, |m, x| m.max(*x)).min(1.0).asin()
}

/// Orthonormal basis of the column space via Householder QR.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = truncated_svd(&DMatrix::identity(3, 3), &SvdConvention::with_rank(2)).unwrap();
        assert_eq!(svd.singular_values, vec![1.0, 1.0]);
    }

    #[test]
    fn rank_one_is_reconstructed() {
        let u = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let v = DMatrix::from_column_slice(4, 1, &[0.3, 0.1, -0.7, 2.0]);
        let m = &u * v.transpose();
        let svd = truncated_svd(&m, &SvdConvention::with_rank(1)).unwrap();
        assert!((svd.reconstruct() - &m).norm() < 1e-12 * m.norm());
    }

    #[test]
    fn matches_reference_eigensolver_on_gram() {
        let m = random(6, 8, 3);
        let svd = truncated_svd(&m, &SvdConvention::with_rank(3)).unwrap();
        // right singular vectors are eigenvectors of MᵀM
        let (vals, vecs) = sym_eigen(&(m.transpose() * &m)).unwrap();
        let reference = vecs.columns(0, 3).into_owned();
        assert!(subspace_angle(&svd.v, &reference) < 1e-10);
        for k in 0..3 {
            assert!((svd.singular_values[k].powi(2) - vals[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn full_rank_reconstructs() {
        let m = random(5, 7, 11);
        let svd = truncated_svd(&m, &SvdConvention::with_rank(5)).unwrap();
        assert!((svd.reconstruct() - &m).norm() < 1e-10 * m.norm());
    }

    #[test]
    fn sign_rule_holds() {
        let m = random(7, 4, 5);
        let svd = truncated_svd(&m, &SvdConvention::with_rank(4)).unwrap();
        for c in 0..4 {
            let col = svd.u.column(c);
            let p = pivot_index(col.iter());
            assert!(col[p] > 0.0);
        }
    }

    #[test]
    fn rejects_non_finite_and_oversized_rank() {
        let mut m = random(3, 3, 1);
        assert!(truncated_svd(&m, &SvdConvention::with_rank(4)).is_err());
        m[(1, 1)] = f64::NAN;
        assert!(matches!(
            truncated_svd(&m, &SvdConvention::with_rank(1)),
            Err(TtdeError::NonFinite(_))
        ));
    }

    #[test]
    fn eigen_is_sorted_and_orthonormal() {
        let m = random(6, 6, 9);
        let (vals, vecs) = sym_eigen(&(&m * m.transpose())).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let g = vecs.transpose() * &vecs;
        assert!((g - DMatrix::identity(6, 6)).abs().max() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_projector() {
        let q = orthonormalize(&random(5, 2, 4));
        let p = &q * q.transpose();
        let pi = pinv_sym(&p, 1e-10).unwrap();
        assert!((&pi - &p).abs().max() < 1e-10);
        assert!(pinv_sym(&DMatrix::zeros(3, 3), 1e-10).is_err());
    }
}

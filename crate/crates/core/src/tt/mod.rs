//! Tensor trains, small dense tensors, and the exact contractions used as
//! oracles.
//!
//! Indexing is row-major everywhere: the first index of a multi-index varies
//! slowest. Core `j` has shape `(r_{j-1}, n_j, r_j)` and entry `(a, i, b)`
//! lives at `(a * n_j + i) * r_j + b` of its flat buffer, so reshaping a core
//! to a `(r_{j-1} n_j) × r_j` matrix groups `(a, i)` as the row index.

pub mod linalg;

use nalgebra::DMatrix;

use crate::error::{Result, TtdeError};

/// Default ceiling on the entry count of any dense object built from a TT.
pub const DEFAULT_DENSE_CAP: usize = 1 << 24;

/// One three-index core.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    left: usize,
    n: usize,
    right: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn new(left: usize, n: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if left == 0 || n == 0 || right == 0 {
            return Err(TtdeError::Shape(format!(
                "core dimensions must be positive, got ({left}, {n}, {right})"
            )));
        }
        if data.len() != left * n * right {
            return Err(TtdeError::Shape(format!(
                "core ({left}, {n}, {right}) needs {} entries, got {}",
                left * n * right,
                data.len()
            )));
        }
        Ok(Self {
            left,
            n,
            right,
            data,
        })
    }

    pub fn zeros(left: usize, n: usize, right: usize) -> Self {
        Self {
            left,
            n,
            right,
            data: vec![0.0; left * n * right],
        }
    }

    /// Core of shape `(rows / n, n, cols)` from a `(r n) × r'` matrix whose
    /// row index is `a * n + i`.
    pub fn from_matrix(m: &DMatrix<f64>, n: usize) -> Result<Self> {
        let (rows, cols) = m.shape();
        if n == 0 || rows % n != 0 {
            return Err(TtdeError::Shape(format!(
                "{rows} rows are not a multiple of mode size {n}"
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(m[(r, c)]);
            }
        }
        Self::new(rows / n, n, cols, data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.n, self.right)
    }

    pub fn left_rank(&self) -> usize {
        self.left
    }

    pub fn mode_size(&self) -> usize {
        self.n
    }

    pub fn right_rank(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[(a * self.n + i) * self.right + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, v: f64) {
        self.data[(a * self.n + i) * self.right + b] = v;
    }

    /// The `(r n) × r'` reshape.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left * self.n, self.right, &self.data)
    }

    /// The `r × r'` slice at mode index `i`.
    pub fn slice(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.left, self.right, |a, b| self.get(a, i, b))
    }

    /// `Σ_i w_i G(:, i, :)`.
    pub fn contract_mode(&self, w: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(w.len(), self.n);
        let mut out = DMatrix::zeros(self.left, self.right);
        for a in 0..self.left {
            for (i, wi) in w.iter().enumerate() {
                if *wi == 0.0 {
                    continue;
                }
                let base = (a * self.n + i) * self.right;
                for b in 0..self.right {
                    out[(a, b)] += wi * self.data[base + b];
                }
            }
        }
        out
    }
}

/// A d-way tensor in TT format.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Core>,
}

impl TensorTrain {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(TtdeError::Shape("a tensor train needs at least one core".into()));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(TtdeError::Shape("boundary ranks must be 1".into()));
        }
        for j in 1..cores.len() {
            if cores[j - 1].right != cores[j].left {
                return Err(TtdeError::Shape(format!(
                    "rank mismatch between cores {} and {}: {} vs {}",
                    j - 1,
                    j,
                    cores[j - 1].right,
                    cores[j].left
                )));
            }
        }
        for (j, c) in cores.iter().enumerate() {
            if c.data.iter().any(|x| !x.is_finite()) {
                return Err(TtdeError::NonFinite(format!("core {j}")));
            }
        }
        Ok(Self { cores })
    }

    /// Rank-1 train from one vector per mode.
    pub fn rank_one(vectors: &[Vec<f64>]) -> Result<Self> {
        let cores = vectors
            .iter()
            .map(|v| Core::new(1, v.len(), 1, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    /// All-zero train with the given mode sizes (rank 1).
    pub fn zeros(mode_sizes: &[usize]) -> Result<Self> {
        Self::new(mode_sizes.iter().map(|&n| Core::zeros(1, n, 1)).collect())
    }

    pub fn d(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core(&self, j: usize) -> &Core {
        &self.cores[j]
    }

    pub fn core_mut(&mut self, j: usize) -> &mut Core {
        &mut self.cores[j]
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    /// `(r_0, r_1, …, r_d)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.d() + 1);
        r.push(1);
        r.extend(self.cores.iter().map(|c| c.right));
        r
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n).collect()
    }

    pub fn num_entries(&self) -> Option<usize> {
        self.cores
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(c.n))
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.cores[0].data.iter_mut() {
            *x *= s;
        }
    }

    /// Single entry by chained slice products.
    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.d() {
            return Err(TtdeError::Shape(format!(
                "multi-index of length {} for a train of order {}",
                idx.len(),
                self.d()
            )));
        }
        let mut msg = vec![1.0];
        for (core, &i) in self.cores.iter().zip(idx) {
            if i >= core.n {
                return Err(TtdeError::OutOfRange(format!(
                    "index {i} for mode size {}",
                    core.n
                )));
            }
            let mut next = vec![0.0; core.right];
            for (a, m) in msg.iter().enumerate() {
                let base = (a * core.n + i) * core.right;
                for (b, out) in next.iter_mut().enumerate() {
                    *out += m * core.data[base + b];
                }
            }
            msg = next;
        }
        Ok(msg[0])
    }

    /// `Σ_{i} A(i) Π_j w_j(i_j)` for one weight vector per mode.
    pub fn contract_all(&self, weights: &[Vec<f64>]) -> Result<f64> {
        if weights.len() != self.d() {
            return Err(TtdeError::Shape("one weight vector per mode expected".into()));
        }
        let mut msg = DMatrix::from_element(1, 1, 1.0);
        for (core, w) in self.cores.iter().zip(weights) {
            if w.len() != core.n {
                return Err(TtdeError::Shape(format!(
                    "weight of length {} for mode size {}",
                    w.len(),
                    core.n
                )));
            }
            msg *= core.contract_mode(w);
        }
        Ok(msg[(0, 0)])
    }
}

/// Dense tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    mode_sizes: Vec<usize>,
    entries: Vec<f64>,
}

impl DenseTensor {
    pub fn new(mode_sizes: Vec<usize>, entries: Vec<f64>) -> Result<Self> {
        let count = checked_product(&mode_sizes)?;
        if count != entries.len() {
            return Err(TtdeError::Shape(format!(
                "mode sizes {mode_sizes:?} need {count} entries, got {}",
                entries.len()
            )));
        }
        Ok(Self {
            mode_sizes,
            entries,
        })
    }

    pub fn zeros(mode_sizes: Vec<usize>) -> Result<Self> {
        let count = checked_product(&mode_sizes)?;
        Ok(Self {
            mode_sizes,
            entries: vec![0.0; count],
        })
    }

    /// Fills entries from a function of the multi-index.
    pub fn from_fn(mode_sizes: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let count = checked_product(&mode_sizes)?;
        let mut entries = Vec::with_capacity(count);
        let mut idx = vec![0usize; mode_sizes.len()];
        for _ in 0..count {
            entries.push(f(&idx));
            increment(&mut idx, &mode_sizes);
        }
        Ok(Self {
            mode_sizes,
            entries,
        })
    }

    pub fn d(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.mode_sizes)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.flat_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖`.
    pub fn rel_distance(&self, other: &DenseTensor) -> f64 {
        let num: f64 = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        num.sqrt() / other.frobenius_norm()
    }
}

fn checked_product(sizes: &[usize]) -> Result<usize> {
    sizes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or(TtdeError::MemoryCap {
            entries: usize::MAX,
            cap: DEFAULT_DENSE_CAP,
        })
}

/// Advances a row-major multi-index (last index fastest).
pub fn increment(idx: &mut [usize], sizes: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < sizes[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// The j-th unfolding: rows group indices `1..j`, columns `j+1..d`.
pub fn unfold(a: &DenseTensor, j: usize) -> Result<DMatrix<f64>> {
    if j > a.d() {
        return Err(TtdeError::OutOfRange(format!(
            "unfolding index {j} for a tensor of order {}",
            a.d()
        )));
    }
    let rows: usize = a.mode_sizes[..j].iter().product();
    let cols: usize = a.mode_sizes[j..].iter().product();
    // row-major flat index = row * cols + col
    Ok(DMatrix::from_row_slice(rows, cols, &a.entries))
}

/// Inverse of [`unfold`].
pub fn fold(m: &DMatrix<f64>, mode_sizes: &[usize], j: usize) -> Result<DenseTensor> {
    let rows: usize = mode_sizes[..j.min(mode_sizes.len())].iter().product();
    if m.nrows() != rows || m.nrows() * m.ncols() != checked_product(mode_sizes)? {
        return Err(TtdeError::Shape(format!(
            "{}x{} matrix does not fold to {mode_sizes:?} at {j}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut entries = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            entries.push(m[(r, c)]);
        }
    }
    DenseTensor::new(mode_sizes.to_vec(), entries)
}

pub fn tt_to_dense(t: &TensorTrain) -> Result<DenseTensor> {
    tt_to_dense_capped(t, DEFAULT_DENSE_CAP)
}

pub fn tt_to_dense_capped(t: &TensorTrain, cap: usize) -> Result<DenseTensor> {
    let entries = t.num_entries().unwrap_or(usize::MAX);
    if entries > cap {
        return Err(TtdeError::MemoryCap { entries, cap });
    }
    // (prefix entries) × r_j matrix grown one core at a time
    let mut acc = DMatrix::from_element(1, 1, 1.0);
    for core in t.cores() {
        let (r, n, rr) = core.shape();
        let rows = acc.nrows();
        let mut next = DMatrix::zeros(rows * n, rr);
        for p in 0..rows {
            for i in 0..n {
                for a in 0..r {
                    let w = acc[(p, a)];
                    if w == 0.0 {
                        continue;
                    }
                    let base = (a * n + i) * rr;
                    for b in 0..rr {
                        next[(p * n + i, b)] += w * core.data[base + b];
                    }
                }
            }
        }
        acc = next;
    }
    DenseTensor::new(t.mode_sizes(), acc.column(0).iter().copied().collect())
}

/// `Ĝ_{1:k}`: the `(n_1⋯n_k) × r_k` matrix of the first `k` cores chained.
pub fn left_stack(t: &TensorTrain, k: usize) -> Result<DMatrix<f64>> {
    left_stack_capped(t, k, DEFAULT_DENSE_CAP)
}

pub fn left_stack_capped(t: &TensorTrain, k: usize, cap: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > t.d() {
        return Err(TtdeError::OutOfRange(format!(
            "left stack of {k} cores for a train of order {}",
            t.d()
        )));
    }
    let rows = t.mode_sizes()[..k]
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    let entries = rows.saturating_mul(t.core(k - 1).right_rank());
    if entries > cap {
        return Err(TtdeError::MemoryCap { entries, cap });
    }
    let mut acc = t.core(0).as_matrix();
    for j in 1..k {
        let core = t.core(j);
        let (r, n, rr) = core.shape();
        let prev = acc.nrows();
        let mut next = DMatrix::zeros(prev * n, rr);
        for p in 0..prev {
            for a in 0..r {
                let w = acc[(p, a)];
                if w == 0.0 {
                    continue;
                }
                for i in 0..n {
                    let base = (a * n + i) * rr;
                    for b in 0..rr {
                        next[(p * n + i, b)] += w * core.data[base + b];
                    }
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// `Σ_i A(i) B(i)` by a left-to-right sweep over rank space.
pub fn tt_inner(a: &TensorTrain, b: &TensorTrain) -> Result<f64> {
    if a.mode_sizes() != b.mode_sizes() {
        return Err(TtdeError::Shape(format!(
            "mode sizes differ: {:?} vs {:?}",
            a.mode_sizes(),
            b.mode_sizes()
        )));
    }
    // msg is r_A × r_B
    let mut msg = DMatrix::from_element(1, 1, 1.0);
    for (ca, cb) in a.cores().iter().zip(b.cores()) {
        let n = ca.mode_size();
        let mut next = DMatrix::zeros(ca.right_rank(), cb.right_rank());
        for i in 0..n {
            let sa = ca.slice(i);
            let sb = cb.slice(i);
            // next += sAᵀ · msg · sB, ordered to keep the cheaper product first
            let t = msg.tr_mul(&sa).transpose();
            next.gemm(1.0, &t, &sb, 1.0);
        }
        msg = next;
    }
    Ok(msg[(0, 0)])
}

pub fn tt_norm(t: &TensorTrain) -> Result<f64> {
    Ok(tt_inner(t, t)?.max(0.0).sqrt())
}

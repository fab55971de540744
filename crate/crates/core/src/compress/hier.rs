use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cut_rank, resolve_ranks, top_left_singular, validate_blocks, LeftSweep, Ranks};
use crate::basis::FeatureBlock;
use crate::error::{Result, TtdeError};
use crate::tt::linalg::{pinv, truncated_svd, SvdConvention};
use crate::tt::TensorTrain;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    /// Half-open mode interval `[lo, hi)`.
    pub lo: usize,
    pub hi: usize,
    pub children: Option<(usize, usize)>,
}

/// Binary interval tree over the modes; each internal node keeps the top
/// right singular vectors of the covariance block between its children.
#[derive(Debug, Clone)]
pub struct DyadicCovTree {
    pub nodes: Vec<TreeNode>,
    /// `V'_v` for internal node `v`, shape `n|right(v)| × k_v`.
    pub right_factors: Vec<Option<DMatrix<f64>>>,
}

fn build_nodes(lo: usize, hi: usize, nodes: &mut Vec<TreeNode>) -> usize {
    let id = nodes.len();
    nodes.push(TreeNode {
        lo,
        hi,
        children: None,
    });
    if hi - lo > 1 {
        let mid = lo + (hi - lo).div_ceil(2);
        let l = build_nodes(lo, mid, nodes);
        let r = build_nodes(mid, hi, nodes);
        nodes[id].children = Some((l, r));
    }
    id
}

/// Tree shape only (no statistics).
pub fn dyadic_nodes(d: usize) -> Vec<TreeNode> {
    let mut nodes = Vec::new();
    if d > 0 {
        build_nodes(0, d, &mut nodes);
    }
    nodes
}

/// Internal nodes whose right children tile the suffix `{j+1, …, d−1}`
/// (0-based), ordered from the leaf upwards so the tiles run left to right.
pub fn dyadic_cover(nodes: &[TreeNode], j: usize) -> Vec<usize> {
    let mut path = Vec::new();
    let mut v = 0;
    while let Some((l, r)) = nodes[v].children {
        if j < nodes[l].hi {
            path.push(v);
            v = l;
        } else {
            v = r;
        }
    }
    path.reverse();
    path
}

/// Concatenated feature rows for the modes `[lo, hi)`, as an `N × n(hi−lo)` matrix.
fn stacked_features(blocks: &[FeatureBlock], lo: usize, hi: usize) -> DMatrix<f64> {
    let big_n = blocks[0].rows();
    let widths: Vec<usize> = blocks[lo..hi].iter().map(|b| b.n()).collect();
    let total: usize = widths.iter().sum();
    let mut f = DMatrix::zeros(big_n, total);
    let mut offset = 0;
    for b in &blocks[lo..hi] {
        for i in 0..big_n {
            for (l, v) in b.row(i).iter().enumerate() {
                f[(i, offset + l)] = *v;
            }
        }
        offset += b.n();
    }
    f
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, c| m[(i, cols[c])])
}

impl DyadicCovTree {
    pub fn build(blocks: &[FeatureBlock], sketch: usize, seed: u64, pinv_rel_tol: f64) -> Result<Self> {
        let big_n = validate_blocks(blocks)?;
        let d = blocks.len();
        if d < 2 {
            return Err(TtdeError::InvalidParameter(
                "hierarchical sketching needs at least two modes".into(),
            ));
        }
        if sketch == 0 {
            return Err(TtdeError::InvalidParameter("sketch size must be positive".into()));
        }
        let nodes = dyadic_nodes(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = 1.0 / big_n as f64;
        let mut right_factors = vec![None; nodes.len()];
        for (v, node) in nodes.iter().enumerate() {
            let Some((l, r)) = node.children else { continue };
            let fs = stacked_features(blocks, nodes[l].lo, nodes[l].hi);
            let ft = stacked_features(blocks, nodes[r].lo, nodes[r].hi);
            let (ps, pt) = (fs.ncols(), ft.ncols());
            let mut rows = rand::seq::index::sample(&mut rng, ps, sketch.min(ps)).into_vec();
            let mut cols = rand::seq::index::sample(&mut rng, pt, sketch.min(pt)).into_vec();
            rows.sort_unstable();
            cols.sort_unstable();
            // C = M[:, J], R = M[I, :], W = M[I, J] with M = Fsᵀ Ft / N
            let c = fs.tr_mul(&select_columns(&ft, &cols)) * inv;
            let rmat = select_columns(&fs, &rows).tr_mul(&ft) * inv;
            let w = DMatrix::from_fn(rows.len(), cols.len(), |a, b| c[(rows[a], b)]);
            let w_pinv = match pinv(&w, pinv_rel_tol) {
                Ok(p) => p,
                Err(TtdeError::Numerical(_)) => DMatrix::zeros(cols.len(), rows.len()),
                Err(e) => return Err(e),
            };
            let qr = c.qr();
            let core = qr.r() * w_pinv * rmat;
            let k = sketch.min(ps).min(pt).min(core.nrows());
            let svd = truncated_svd(&core, &SvdConvention::with_rank(k))?;
            right_factors[v] = Some(svd.v);
        }
        Ok(Self {
            nodes,
            right_factors,
        })
    }
}

/// TT-SVD-c of cluster order one with each suffix block compressed by the
/// dyadic covariance tree.
pub fn tt_svd_c_hier(blocks: &[FeatureBlock], ranks: &Ranks, sketch: usize, seed: u64, pinv_rel_tol: f64) -> Result<TensorTrain> {
    let big_n = validate_blocks(blocks)?;
    let sizes: Vec<usize> = blocks.iter().map(|b| b.n()).collect();
    let r = resolve_ranks(&sizes, ranks)?;
    let d = blocks.len();
    let tree = DyadicCovTree::build(blocks, sketch, seed, pinv_rel_tol)?;
    // projected features V'ᵀ f_T for every right child, N × k_v each
    let projections: Vec<Option<DMatrix<f64>>> = tree
        .nodes
        .iter()
        .zip(&tree.right_factors)
        .map(|(node, v)| {
            let (_, rc) = node.children?;
            let f = stacked_features(blocks, tree.nodes[rc].lo, tree.nodes[rc].hi);
            Some(f * v.as_ref().expect("internal node has a factor"))
        })
        .collect();
    let inv = 1.0 / big_n as f64;
    let mut sweep = LeftSweep::new(blocks);
    for j in 0..d - 1 {
        let cover = dyadic_cover(&tree.nodes, j);
        let width = 1 + cover
            .iter()
            .map(|&v| projections[v].as_ref().map_or(0, |p| p.ncols()))
            .sum::<usize>();
        let mut e = DMatrix::from_element(big_n, width, 1.0);
        let mut offset = 1;
        for &v in &cover {
            let p = projections[v].as_ref().expect("cover nodes are internal");
            e.columns_mut(offset, p.ncols()).copy_from(p);
            offset += p.ncols();
        }
        let dm = sweep.d_matrix();
        let b = (&dm * e) * inv;
        let rank = cut_rank(ranks, r[j + 1], b.nrows().min(b.ncols()), j + 1)?;
        let u = top_left_singular(&b, rank, j + 1)?;
        sweep.push(u, &dm)?;
    }
    sweep.finish()
}

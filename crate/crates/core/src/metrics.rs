//! Relative L² distance between densities on a shared grid, and the
//! second-moment error between sample sets.

use serde::{Deserialize, Serialize};

use crate::basis::GridSpec;
use crate::density::{sample_moment2, DensityModel};
use crate::error::{Result, TtdeError};
use crate::estimator::SampleSet;
use crate::tt::{tt_inner, TensorTrain};

/// One JSON-lines metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub config_hash: String,
}

/// Multiplies mode `j` of a node-value TT by `√mesh_j`, so that `tt_inner` of
/// two scaled trains is the midpoint-rule L² product.
pub fn fold_quadrature(t: &TensorTrain, grids: &[GridSpec]) -> Result<TensorTrain> {
    if grids.len() != t.d() {
        return Err(TtdeError::Shape(format!("{} grids for order {}", grids.len(), t.d())));
    }
    let mut out = t.clone();
    for (j, g) in grids.iter().enumerate() {
        if out.core(j).mode_size() != g.points() {
            return Err(TtdeError::Shape(format!(
                "mode {j}: {} entries for {} grid nodes",
                out.core(j).mode_size(),
                g.points()
            )));
        }
        let s = g.mesh.sqrt();
        out.core_mut(j).data_mut().iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// `‖p − q‖ / ‖q‖` for quadrature-scaled grid trains.
pub fn rel_l2_tt(p: &TensorTrain, q: &TensorTrain) -> Result<f64> {
    let qq = tt_inner(q, q)?;
    if !(qq > 0.0) {
        return Err(TtdeError::Degenerate("reference density has zero norm".into()));
    }
    let pp = tt_inner(p, p)?;
    let pq = tt_inner(p, q)?;
    Ok((pp - 2.0 * pq + qq).max(0.0).sqrt() / qq.sqrt())
}

fn grids_of(m: &DensityModel) -> Vec<GridSpec> {
    m.dims().iter().map(|d| d.grid).collect()
}

fn same_grids(a: &[GridSpec], b: &[GridSpec]) -> Result<()> {
    let ok = a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            let tol = 1e-9 * x.width();
            (x.lo - y.lo).abs() < tol && (x.hi - y.hi).abs() < tol && (x.mesh - y.mesh).abs() < tol
        });
    if ok {
        Ok(())
    } else {
        Err(TtdeError::Shape("densities live on different grids".into()))
    }
}

/// Relative L² error of `p` against the model `q`.
pub fn rel_l2(p: &DensityModel, q: &DensityModel) -> Result<f64> {
    same_grids(&grids_of(p), &grids_of(q))?;
    rel_l2_tt(&p.grid_tt(true)?, &q.grid_tt(true)?)
}

/// Relative L² error of `p` against a node-value truth on `p`'s grids.
pub fn rel_l2_to_grid(p: &DensityModel, truth: &TensorTrain) -> Result<f64> {
    let grids = grids_of(p);
    rel_l2_tt(&p.grid_tt(true)?, &fold_quadrature(truth, &grids)?)
}

/// `‖G̃ − G*‖_F / ‖G*‖_F` with `G = XᵀX / N` for each set.
pub fn second_moment_error(x: &SampleSet, reference: &SampleSet) -> Result<f64> {
    if x.d() != reference.d() {
        return Err(TtdeError::Shape(format!(
            "sample dimensions differ: {} vs {}",
            x.d(),
            reference.d()
        )));
    }
    let g = sample_moment2(x);
    let g_ref = sample_moment2(reference);
    let denom = g_ref.norm();
    if denom == 0.0 {
        return Err(TtdeError::Degenerate("reference Gram is zero".into()));
    }
    Ok((g - &g_ref).norm() / denom)
}

//! Leaf-value updates for a fixed tree structure.

use super::tree::LeafAssignment;
use crate::error::{check_len, Error, Result};
use crate::loss::LossEvaluation;
use crate::projection::Projection;
use nalgebra::{DMatrix, DVector};

/// Newton step `−(MᵀHM)⁻¹ Mᵀg` for the leaf values.
///
/// With `H = diag(d) + c · diag(w) P diag(w)`, the system is assembled as
/// `diag(Mᵀd) + c · FᵀF` where `F = Qᵀ diag(w) M` has one row per
/// environment (or anchor direction), costing `O(n k + E k²)`.
pub fn solve_leaf_values(assignment: &LeafAssignment, eval: &LossEvaluation, projection: &Projection) -> Result<Vec<f64>> {
    let n = assignment.leaf_index.len();
    check_len(n, eval.gradient.len())?;
    let k = assignment.num_leaves;
    let mut system = DMatrix::from_diagonal(&DVector::from_vec(assignment.leaf_sums(&eval.hessian.diagonal)));
    if eval.hessian.anchor_weight != 0.0 {
        let f = projection.leaf_factor(&assignment.leaf_index, k, &eval.hessian.outer)?;
        system += f.tr_mul(&f) * eval.hessian.anchor_weight;
    }
    let rhs = -DVector::from_vec(assignment.leaf_sums(&eval.gradient));
    solve_with_jitter(system, &rhs).map(|v| v.as_slice().to_vec())
}

/// Diagnostic first-order update: the leaf's gradient sum divided by the
/// leaf's γ = 1 curvature (1 per row for squared error, `ṙ` for probit).
pub fn first_order_leaf_values(assignment: &LeafAssignment, eval: &LossEvaluation) -> Result<Vec<f64>> {
    check_len(assignment.leaf_index.len(), eval.gradient.len())?;
    let g = assignment.leaf_sums(&eval.gradient);
    let h = assignment.leaf_sums(&eval.hessian.outer);
    Ok(g.iter()
        .zip(&h)
        .map(|(g, h)| if *h > 0.0 { -g / h } else { 0.0 })
        .collect())
}

fn acceptable(system: &DMatrix<f64>, rhs: &DVector<f64>, x: &DVector<f64>) -> bool {
    if x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let residual = (system * x - rhs).amax();
    let scale = system.amax() * x.amax() + rhs.amax();
    residual <= 1e-8 * scale.max(f64::MIN_POSITIVE)
}

pub(crate) fn solve_with_jitter(mut system: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(x) = system.clone().lu().solve(rhs) {
        if acceptable(&system, rhs, &x) {
            return Ok(x);
        }
    }
    let k = system.nrows().max(1);
    let jitter = 1e-8 * system.trace().abs() / k as f64;
    let jitter = if jitter > 0.0 { jitter } else { 1e-8 };
    for i in 0..system.nrows() {
        system[(i, i)] += jitter;
    }
    match system.clone().lu().solve(rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(Error::Numerical(format!(
            "leaf-value system of size {k} is singular even after jitter"
        ))),
    }
}

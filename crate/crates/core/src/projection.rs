//! Orthogonal projection onto the column space of the anchor.
//!
//! Discrete anchors use the group-mean operator directly. Continuous anchors
//! are augmented with an intercept column and orthonormalized once; the
//! operator is always kept factored and never formed as an `n × n` matrix.

use crate::data::AnchorSpec;
use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;

/// Relative norm below which a Gram-Schmidt direction counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    GroupMean { codes: Vec<usize>, counts: Vec<usize> },
    /// `basis` is `n × r` with orthonormal columns.
    General { basis: DMatrix<f64> },
}

impl Projection {
    pub fn build(anchor: &AnchorSpec) -> Result<Self> {
        if anchor.n() == 0 {
            return Err(Error::Data("cannot build a projection from zero rows".into()));
        }
        match anchor {
            AnchorSpec::Discrete { codes, levels, .. } => Ok(Self::group_mean(codes, levels.len())),
            AnchorSpec::Continuous { matrix, .. } => {
                let n = matrix.nrows();
                let mut design = DMatrix::<f64>::from_element(n, matrix.ncols() + 1, 1.0);
                design.columns_mut(1, matrix.ncols()).copy_from(matrix);
                Ok(Self::from_design(&design))
            }
        }
    }

    /// Group-mean projector. Empty groups are allowed and simply never hit.
    pub fn group_mean(codes: &[usize], num_groups: usize) -> Self {
        let mut counts = vec![0usize; num_groups];
        for &c in codes {
            counts[c] += 1;
        }
        Projection::GroupMean {
            codes: codes.to_vec(),
            counts,
        }
    }

    /// Projector onto the span of the columns of `design`, used as given
    /// (no intercept is added). Dependent columns are dropped left to right.
    pub fn from_design(design: &DMatrix<f64>) -> Self {
        let n = design.nrows();
        let largest = design
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
        let mut kept: Vec<nalgebra::DVector<f64>> = Vec::new();
        for col in design.column_iter() {
            let mut v = col.clone_owned();
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for q in &kept {
                    let c = q.dot(&v);
                    v.axpy(-c, q, 1.0);
                }
            }
            let norm = v.norm();
            if largest > 0.0 && norm > RANK_TOLERANCE * largest {
                kept.push(v / norm);
            }
        }
        let basis = if kept.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&kept)
        };
        Projection::General { basis }
    }

    pub fn n(&self) -> usize {
        match self {
            Projection::GroupMean { codes, .. } => codes.len(),
            Projection::General { basis } => basis.nrows(),
        }
    }

    /// Dimension of the projection's range.
    pub fn rank(&self) -> usize {
        match self {
            Projection::GroupMean { counts, .. } => counts.iter().filter(|&&c| c > 0).count(),
            Projection::General { basis } => basis.ncols(),
        }
    }

    /// Coordinates of `P v` in an orthonormal basis of the range, so that
    /// `‖P v‖² = ‖coordinates(v)‖²`.
    pub fn coordinates(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), v.len())?;
        Ok(match self {
            Projection::GroupMean { codes, counts } => {
                let mut sums = vec![0.0; counts.len()];
                for (&c, &x) in codes.iter().zip(v) {
                    sums[c] += x;
                }
                sums.iter()
                    .zip(counts)
                    .map(|(s, &n)| if n > 0 { s / (n as f64).sqrt() } else { 0.0 })
                    .collect()
            }
            Projection::General { basis } => basis
                .column_iter()
                .map(|q| q.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect(),
        })
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), v.len())?;
        Ok(match self {
            Projection::GroupMean { codes, counts } => {
                let mut sums = vec![0.0; counts.len()];
                for (&c, &x) in codes.iter().zip(v) {
                    sums[c] += x;
                }
                for (s, &n) in sums.iter_mut().zip(counts) {
                    if n > 0 {
                        *s /= n as f64;
                    }
                }
                codes.iter().map(|&c| sums[c]).collect()
            }
            Projection::General { basis } => {
                let coords = self.coordinates(v)?;
                let mut out = vec![0.0; v.len()];
                for (q, c) in basis.column_iter().zip(coords) {
                    for (o, qi) in out.iter_mut().zip(q.iter()) {
                        *o += c * qi;
                    }
                }
                out
            }
        })
    }

    /// Column-wise projection of a row-aligned matrix.
    pub fn apply_columns(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len(self.n(), m.nrows())?;
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            let projected = self.apply(col.as_slice())?;
            out.column_mut(j).copy_from_slice(&projected);
        }
        Ok(out)
    }

    /// `‖P v‖²`.
    pub fn squared_norm(&self, v: &[f64]) -> Result<f64> {
        Ok(self.coordinates(v)?.iter().map(|c| c * c).sum())
    }

    /// `Qᵀ diag(w) Z` for a dense row-aligned matrix `Z`, so that
    /// `Zᵀ diag(w) P diag(w) Z = Fᵀ F`.
    pub fn factor_columns(&self, weights: &[f64], columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len(self.n(), weights.len())?;
        check_len(self.n(), columns.nrows())?;
        let mut out = DMatrix::zeros(self.rank_bound(), columns.ncols());
        for (j, col) in columns.column_iter().enumerate() {
            let weighted: Vec<f64> = col.iter().zip(weights).map(|(z, w)| z * w).collect();
            let coords = self.coordinates(&weighted)?;
            out.column_mut(j).copy_from_slice(&coords);
        }
        Ok(out)
    }

    fn rank_bound(&self) -> usize {
        match self {
            Projection::GroupMean { counts, .. } => counts.len(),
            Projection::General { basis } => basis.ncols(),
        }
    }

    /// The `r × k` matrix `F = Qᵀ diag(w) M` for the one-hot leaf map `M`, so
    /// that `Mᵀ diag(w) P diag(w) M = Fᵀ F`. Costs `O(n r)`.
    pub fn leaf_factor(&self, leaf_index: &[u32], num_leaves: usize, weights: &[f64]) -> Result<DMatrix<f64>> {
        check_len(self.n(), leaf_index.len())?;
        check_len(self.n(), weights.len())?;
        Ok(match self {
            Projection::GroupMean { codes, counts } => {
                let mut f = DMatrix::zeros(counts.len(), num_leaves);
                for ((&c, &l), &w) in codes.iter().zip(leaf_index).zip(weights) {
                    f[(c, l as usize)] += w;
                }
                for (e, &n) in counts.iter().enumerate() {
                    if n > 0 {
                        f.row_mut(e).scale_mut(1.0 / (n as f64).sqrt());
                    }
                }
                f
            }
            Projection::General { basis } => {
                let mut f = DMatrix::zeros(basis.ncols(), num_leaves);
                for (r, q) in basis.column_iter().enumerate() {
                    for ((&qi, &l), &w) in q.iter().zip(leaf_index).zip(weights) {
                        f[(r, l as usize)] += qi * w;
                    }
                }
                f
            }
        })
    }
}

//! Cyclic coordinate descent for elastic-net penalized quadratics
//!
//! ```text
//! minimize  ½ bᵀ A b − cᵀ b + Σ_{j penalized} [ l1 |b_j| + ½ l2 b_j² ]
//! ```
//!
//! Every few sweeps the current support is polished by solving its KKT system
//! exactly; the result is accepted only when signs and the inactive-set
//! conditions hold, which makes badly conditioned problems (large γ) exact.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub(crate) const TOLERANCE: f64 = 1e-8;
pub(crate) const MAX_SWEEPS: usize = 100_000;
const POLISH_EVERY: usize = 10;

pub(crate) struct QuadraticProblem<'a> {
    pub a: &'a DMatrix<f64>,
    pub c: &'a DVector<f64>,
    pub penalized: &'a [bool],
    pub l1: f64,
    pub l2: f64,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl QuadraticProblem<'_> {
    fn penalties(&self, j: usize) -> (f64, f64) {
        if self.penalized[j] {
            (self.l1, self.l2)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn solve(&self, start: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        let p = self.c.len();
        let mut b = start.cloned().unwrap_or_else(|| DVector::zeros(p));
        let mut ab = self.a * &b;
        let mut last_delta = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            let mut max_delta = 0.0_f64;
            for j in 0..p {
                let (l1, l2) = self.penalties(j);
                let ajj = self.a[(j, j)];
                let denom = ajj + l2;
                let old = b[j];
                let new = if denom > 0.0 {
                    let z = self.c[j] - (ab[j] - ajj * old);
                    soft_threshold(z, l1) / denom
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    b[j] = new;
                    ab.axpy(delta, &self.a.column(j), 1.0);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            last_delta = max_delta;
            if max_delta < TOLERANCE || sweep % POLISH_EVERY == 0 {
                if let Some(exact) = self.polish(&b) {
                    return Ok(exact);
                }
                if max_delta < TOLERANCE {
                    return Ok(b);
                }
                ab = self.a * &b;
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_SWEEPS,
            last_delta,
            context: "elastic-net coordinate descent".into(),
        })
    }

    /// Exact solution on the support of `b`, if it satisfies the optimality
    /// conditions of the full problem.
    fn polish(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let p = b.len();
        let active: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0 || !self.penalized[j]).collect();
        let mut out = DVector::zeros(p);
        if !active.is_empty() {
            let m = active.len();
            let mut sys = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for (r, &j) in active.iter().enumerate() {
                for (s, &k) in active.iter().enumerate() {
                    sys[(r, s)] = self.a[(j, k)];
                }
                let (l1, l2) = self.penalties(j);
                sys[(r, r)] += l2;
                rhs[r] = self.c[j] - l1 * b[j].signum() * (self.penalized[j] as u8 as f64);
            }
            let sol = sys.cholesky()?.solve(&rhs);
            for (r, &j) in active.iter().enumerate() {
                if !sol[r].is_finite() {
                    return None;
                }
                if self.penalized[j] && sol[r].signum() != b[j].signum() {
                    return None;
                }
                out[j] = sol[r];
            }
        }
        let grad = self.a * &out - self.c;
        let slack = 1e-12 * (1.0 + self.l1);
        for j in 0..p {
            if out[j] == 0.0 && self.penalized[j] && grad[j].abs() > self.l1 + slack {
                return None;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unpenalized_problem_is_solved_exactly() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = DVector::from_vec(vec![1.0, -1.0]);
        let prob = QuadraticProblem {
            a: &a,
            c: &c,
            penalized: &[true, true],
            l1: 0.0,
            l2: 0.0,
        };
        let b = prob.solve(None).unwrap();
        let want = a.clone().lu().solve(&c).unwrap();
        assert!((b - want).amax() < 1e-14);
    }

    #[test]
    fn strong_lasso_zeroes_everything() {
        let a = DMatrix::identity(3, 3);
        let c = DVector::from_vec(vec![0.3, -0.7, 0.1]);
        let prob = QuadraticProblem {
            a: &a,
            c: &c,
            penalized: &[true; 3],
            l1: 0.7,
            l2: 0.0,
        };
        assert_eq!(prob.solve(None).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn ill_conditioned_system_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[1e6 + 1.0, 1e6, 1e6, 1e6 + 1.0]);
        let c = DVector::from_vec(vec![1.0, 2.0]);
        let prob = QuadraticProblem {
            a: &a,
            c: &c,
            penalized: &[true, true],
            l1: 0.0,
            l2: 0.0,
        };
        let b = prob.solve(None).unwrap();
        let want = a.clone().lu().solve(&c).unwrap();
        assert!((b - want).amax() < 1e-6);
    }
}

//! Proximal-Newton solver for the linear probit anchor objective.

use super::solver::QuadraticProblem;
use super::ElasticNet;
use crate::error::{Error, Result};
use crate::loss::{probit_loss, AnchorLoss, Link};
use crate::normal;
use crate::projection::Projection;
use nalgebra::{DMatrix, DVector};

const GRADIENT_TOLERANCE: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 50;
/// Bound on standardized coefficients; hitting it signals (quasi-)separation.
const COEFFICIENT_CAP: f64 = 1e4;

pub(crate) struct Prior<'a> {
    pub alpha: f64,
    /// Prior mean on the original feature scale.
    pub center: &'a [f64],
    pub scales: &'a [f64],
}

/// Solves over `θ = (intercept, b)` with `f = θ₀ + X b` for standardized `X`.
pub(crate) struct ProbitProblem<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
    pub gamma: f64,
    pub projection: Option<&'a Projection>,
    pub enet: ElasticNet,
    pub prior: Option<Prior<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitFitReport {
    pub iterations: usize,
    pub objective: f64,
    pub optimality: f64,
}

impl ProbitProblem<'_> {
    fn n(&self) -> f64 {
        self.x.nrows() as f64
    }

    fn scores(&self, theta: &DVector<f64>) -> Vec<f64> {
        let b = theta.rows(1, self.x.ncols());
        (self.x * b).iter().map(|v| v + theta[0]).collect()
    }

    fn fallback_projection(&self) -> Projection {
        Projection::group_mean(&vec![0; self.x.nrows()], 1)
    }

    fn prior_value(&self, theta: &DVector<f64>) -> f64 {
        match &self.prior {
            Some(p) if p.alpha > 0.0 => {
                let dev: f64 = (0..self.x.ncols())
                    .map(|j| (theta[j + 1] / p.scales[j] - p.center[j]).powi(2))
                    .sum();
                0.5 * p.alpha * dev
            }
            _ => 0.0,
        }
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        let b = theta.rows(1, self.x.ncols());
        self.enet.l1() * b.lp_norm(1) + 0.5 * self.enet.l2() * b.norm_squared()
    }

    fn objective(&self, theta: &DVector<f64>, projection: &Projection) -> Result<f64> {
        let f = self.scores(theta);
        let loss = AnchorLoss::new(self.gamma, Link::Probit, projection)?.value(&f, self.y)?;
        Ok((loss + self.prior_value(theta)) / self.n() + self.penalty(theta))
    }

    /// Gradient and Hessian of the smooth part (loss and prior, without the elastic net).
    fn smooth_derivatives(&self, theta: &DVector<f64>, projection: &Projection) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.x.nrows();
        let p = self.x.ncols();
        let f = self.scores(theta);
        let ev = probit_loss(&f, self.y, self.gamma, projection)?;
        let mut z = DMatrix::from_element(n, p + 1, 1.0);
        z.columns_mut(1, p).copy_from(self.x);
        let g = DVector::from_vec(ev.gradient);
        let mut grad = z.tr_mul(&g);
        let mut zd = z.clone();
        for (i, mut row) in zd.row_iter_mut().enumerate() {
            row *= ev.hessian.diagonal[i];
        }
        let mut hess = z.tr_mul(&zd);
        if ev.hessian.anchor_weight != 0.0 {
            let factor = projection.factor_columns(&ev.hessian.outer, &z)?;
            hess += factor.tr_mul(&factor) * ev.hessian.anchor_weight;
        }
        if let Some(prior) = self.prior.as_ref().filter(|p| p.alpha > 0.0) {
            for j in 0..p {
                let s = prior.scales[j];
                grad[j + 1] += prior.alpha * (theta[j + 1] / s - prior.center[j]) / s;
                hess[(j + 1, j + 1)] += prior.alpha / (s * s);
            }
        }
        let inv_n = 1.0 / self.n();
        Ok((grad * inv_n, hess * inv_n))
    }

    /// Infinity norm of the minimum-norm subgradient of the full objective.
    fn optimality(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> f64 {
        let (l1, l2) = (self.enet.l1(), self.enet.l2());
        let mut worst = grad[0].abs();
        for j in 1..theta.len() {
            let g = grad[j] + l2 * theta[j];
            let v = if theta[j] != 0.0 {
                (g + l1 * theta[j].signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&self) -> Result<(DVector<f64>, ProbitFitReport)> {
        let p = self.x.ncols();
        let owned;
        let projection = match self.projection {
            Some(proj) => proj,
            None => {
                owned = self.fallback_projection();
                &owned
            }
        };
        let mut theta = DVector::zeros(p + 1);
        let prevalence = self.y.iter().filter(|&&v| v > 0.0).count() as f64 / self.n();
        if prevalence > 0.0 && prevalence < 1.0 {
            theta[0] = normal::ppf(prevalence);
        }
        let mut penalized = vec![true; p + 1];
        penalized[0] = false;
        let mut value = self.objective(&theta, projection)?;
        let mut last_step = f64::INFINITY;
        for iteration in 0..MAX_ITERATIONS {
            let (grad, hess) = self.smooth_derivatives(&theta, projection)?;
            let optimality = self.optimality(&theta, &grad);
            if optimality < GRADIENT_TOLERANCE {
                self.check_separation(&theta)?;
                return Ok((
                    theta,
                    ProbitFitReport {
                        iterations: iteration,
                        objective: value,
                        optimality,
                    },
                ));
            }
            let hess = make_positive_definite(hess);
            let c = &hess * &theta - &grad;
            let proposal = QuadraticProblem {
                a: &hess,
                c: &c,
                penalized: &penalized,
                l1: self.enet.l1(),
                l2: self.enet.l2(),
            }
            .solve(Some(&theta))?;
            let direction = &proposal - &theta;
            let decrease = grad.dot(&direction) + self.penalty(&proposal) - self.penalty(&theta);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let candidate = &theta + &direction * step;
                let v = self.objective(&candidate, projection)?;
                if v.is_finite() && v <= value + 1e-4 * step * decrease.min(0.0) {
                    accepted = Some((candidate, v));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, v)) = accepted else {
                return Err(Error::NonConvergence {
                    iterations: iteration + 1,
                    last_delta: optimality,
                    context: "probit line search exhausted its halvings".into(),
                });
            };
            last_step = (&candidate - &theta).amax();
            theta = candidate;
            value = v;
            let largest = theta.rows(1, p).amax();
            if largest > COEFFICIENT_CAP {
                return Err(Error::NonConvergence {
                    iterations: iteration + 1,
                    last_delta: last_step,
                    context: format!(
                        "coefficient magnitude cap {COEFFICIENT_CAP:e} reached (perfectly separable data?)"
                    ),
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: MAX_ITERATIONS,
            last_delta: last_step,
            context: "probit proximal Newton".into(),
        })
    }

    /// Without any shrinkage, a fit that classifies every row correctly means
    /// the maximum-likelihood estimate does not exist.
    fn check_separation(&self, theta: &DVector<f64>) -> Result<()> {
        let shrinkage = self.enet.lambda > 0.0 || self.prior.as_ref().is_some_and(|p| p.alpha > 0.0);
        if shrinkage {
            return Ok(());
        }
        let f = self.scores(theta);
        if f.iter().zip(self.y).all(|(f, y)| f * y > 0.0) {
            return Err(Error::NonConvergence {
                iterations: 0,
                last_delta: 0.0,
                context: "training data are perfectly separated; the unpenalized probit fit has no finite optimum"
                    .into(),
            });
        }
        Ok(())
    }
}

fn make_positive_definite(mut h: DMatrix<f64>) -> DMatrix<f64> {
    if h.clone().cholesky().is_some() {
        return h;
    }
    let scale = h.diagonal().amax().max(1e-12);
    let mut shift = 1e-10 * scale;
    loop {
        let mut trial = h.clone();
        for i in 0..trial.nrows() {
            trial[(i, i)] += shift;
        }
        if trial.clone().cholesky().is_some() {
            h = trial;
            return h;
        }
        shift *= 10.0;
    }
}

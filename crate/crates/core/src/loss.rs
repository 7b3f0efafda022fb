//! Anchor losses for regression (squared error) and probit classification.
//!
//! Both losses share the form `base(f, y) + ½(γ−1)‖P_A r(f)‖²` where `r` is the
//! residual (regression) or the probit score residual
//! `r(f) = −y φ(f) / Φ(y f)`, the derivative of `−log Φ(y f)`.
//! Derivatives of the score residual, with `λ = φ(yf)/Φ(yf)`:
//!
//! ```text
//! ṙ = −f r + r²                      (= λ (y f + λ) ∈ (0, 1))
//! r̈ = (f² − 1) r − 3 f r² + 2 r³
//! ```

use crate::error::{check_len, Error, Result};
use crate::normal;
use crate::projection::Projection;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Probit,
}

/// Factored Hessian `diag(diagonal) + anchor_weight · diag(outer) P diag(outer)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianStructure {
    pub diagonal: Vec<f64>,
    pub anchor_weight: f64,
    pub outer: Vec<f64>,
}

impl HessianStructure {
    pub fn hessian_vector(&self, projection: &Projection, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.diagonal.len(), v.len())?;
        let mut out: Vec<f64> = self.diagonal.iter().zip(v).map(|(d, x)| d * x).collect();
        if self.anchor_weight != 0.0 {
            let wv: Vec<f64> = self.outer.iter().zip(v).map(|(w, x)| w * x).collect();
            let pwv = projection.apply(&wv)?;
            for ((o, w), p) in out.iter_mut().zip(&self.outer).zip(pwv) {
                *o += self.anchor_weight * w * p;
            }
        }
        Ok(out)
    }

    /// Dense `n × n` form. Only meant for small problems and checks.
    pub fn to_dense(&self, projection: &Projection) -> Result<DMatrix<f64>> {
        let n = self.diagonal.len();
        let mut h = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.hessian_vector(projection, &e)?;
            h.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub value: f64,
    /// `∂ℓ/∂f`.
    pub gradient: Vec<f64>,
    pub residuals: Vec<f64>,
    pub hessian: HessianStructure,
}

/// An anchor loss bound to a projection.
#[derive(Debug, Clone, Copy)]
pub struct AnchorLoss<'p> {
    gamma: f64,
    link: Link,
    projection: &'p Projection,
}

impl<'p> AnchorLoss<'p> {
    pub fn new(gamma: f64, link: Link, projection: &'p Projection) -> Result<Self> {
        validate_gamma(gamma)?;
        Ok(AnchorLoss {
            gamma,
            link,
            projection,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn projection(&self) -> &'p Projection {
        self.projection
    }

    pub fn evaluate(&self, scores: &[f64], outcome: &[f64]) -> Result<LossEvaluation> {
        match self.link {
            Link::Identity => regression_loss(scores, outcome, self.gamma, self.projection),
            Link::Probit => probit_loss(scores, outcome, self.gamma, self.projection),
        }
    }

    pub fn value(&self, scores: &[f64], outcome: &[f64]) -> Result<f64> {
        check_len(outcome.len(), scores.len())?;
        let (base, residuals) = match self.link {
            Link::Identity => {
                let r: Vec<f64> = outcome.iter().zip(scores).map(|(y, f)| y - f).collect();
                (0.5 * r.iter().map(|v| v * v).sum::<f64>(), r)
            }
            Link::Probit => {
                check_labels(outcome)?;
                let nll = scores.iter().zip(outcome).map(|(f, y)| -normal::log_cdf(y * f)).sum();
                let r = scores.iter().zip(outcome).map(|(&f, &y)| score_residual(f, y)).collect();
                (nll, r)
            }
        };
        let penalty = if self.gamma != 1.0 {
            self.projection.squared_norm(&residuals)?
        } else {
            0.0
        };
        Ok(base + 0.5 * (self.gamma - 1.0) * penalty)
    }
}

pub fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be a finite value >= 1, got {gamma}")));
    }
    Ok(())
}

fn check_labels(outcome: &[f64]) -> Result<()> {
    if let Some(i) = outcome.iter().position(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::Data(format!(
            "probit label {} at position {i} is not in {{-1, +1}}",
            outcome[i]
        )));
    }
    Ok(())
}

/// Probit score residual `−y φ(f) / Φ(y f)`.
pub fn score_residual(f: f64, y: f64) -> f64 {
    -y * normal::inv_mills(y * f)
}

/// Squared-error anchor loss `½‖y − f‖² + ½(γ−1)‖P(y − f)‖²`.
pub fn regression_loss(scores: &[f64], outcome: &[f64], gamma: f64, projection: &Projection) -> Result<LossEvaluation> {
    validate_gamma(gamma)?;
    check_len(outcome.len(), scores.len())?;
    check_len(projection.n(), scores.len())?;
    let n = scores.len();
    let residuals: Vec<f64> = outcome.iter().zip(scores).map(|(y, f)| y - f).collect();
    let anchor_weight = gamma - 1.0;
    let mut value = 0.5 * residuals.iter().map(|r| r * r).sum::<f64>();
    let gradient = if anchor_weight != 0.0 {
        let coords = projection.coordinates(&residuals)?;
        value += 0.5 * anchor_weight * coords.iter().map(|c| c * c).sum::<f64>();
        let projected = projection.apply(&residuals)?;
        residuals
            .iter()
            .zip(&projected)
            .map(|(r, p)| -r - anchor_weight * p)
            .collect()
    } else {
        residuals.iter().map(|r| -r).collect()
    };
    Ok(LossEvaluation {
        value,
        gradient,
        residuals,
        hessian: HessianStructure {
            diagonal: vec![1.0; n],
            anchor_weight,
            outer: vec![1.0; n],
        },
    })
}

/// Probit anchor loss `−Σ log Φ(y f) + ½(γ−1)‖P r(f)‖²`.
pub fn probit_loss(scores: &[f64], outcome: &[f64], gamma: f64, projection: &Projection) -> Result<LossEvaluation> {
    validate_gamma(gamma)?;
    check_len(outcome.len(), scores.len())?;
    check_len(projection.n(), scores.len())?;
    check_labels(outcome)?;
    let n = scores.len();
    let mut nll = 0.0;
    let mut residuals = Vec::with_capacity(n);
    let mut slope = Vec::with_capacity(n);
    for (&f, &y) in scores.iter().zip(outcome) {
        let z = y * f;
        nll -= normal::log_cdf(z);
        let lambda = normal::inv_mills(z);
        residuals.push(-y * lambda);
        slope.push(lambda * (z + lambda));
    }
    let anchor_weight = gamma - 1.0;
    let (value, gradient, diagonal) = if anchor_weight != 0.0 {
        let penalty = projection.squared_norm(&residuals)?;
        let projected = projection.apply(&residuals)?;
        let mut gradient = Vec::with_capacity(n);
        let mut diagonal = Vec::with_capacity(n);
        for i in 0..n {
            let (f, r, rd) = (scores[i], residuals[i], slope[i]);
            let curvature = (f * f - 1.0) * r - 3.0 * f * r * r + 2.0 * r * r * r;
            gradient.push(r + anchor_weight * rd * projected[i]);
            diagonal.push(rd + anchor_weight * curvature * projected[i]);
        }
        (nll + 0.5 * anchor_weight * penalty, gradient, diagonal)
    } else {
        (nll, residuals.clone(), slope.clone())
    };
    if !value.is_finite() {
        return Err(Error::Numerical("probit anchor loss is not finite".into()));
    }
    Ok(LossEvaluation {
        value,
        gradient,
        residuals,
        hessian: HessianStructure {
            diagonal,
            anchor_weight,
            outer: slope,
        },
    })
}

/// Mean probit negative log-likelihood `−(1/n) Σ log Φ(y f)`.
pub fn probit_nll(scores: &[f64], outcome: &[f64]) -> Result<f64> {
    check_len(outcome.len(), scores.len())?;
    check_labels(outcome)?;
    if scores.is_empty() {
        return Err(Error::Data("empty input".into()));
    }
    let total: f64 = scores.iter().zip(outcome).map(|(f, y)| -normal::log_cdf(y * f)).sum();
    Ok(total / scores.len() as f64)
}

/// Links available for single-observation loss curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveLink {
    Probit,
    /// Logistic link with `r = y σ(−y f)`. Non-convex for larger γ, so it is
    /// only offered here and never as a training objective.
    Logistic,
}

/// Anchor loss of one observation (where `P_A` is the identity) on a grid of scores.
pub fn single_observation_loss_curve(link: CurveLink, gamma: f64, y: f64, grid: &[f64]) -> Result<Vec<f64>> {
    validate_gamma(gamma)?;
    check_labels(&[y])?;
    Ok(grid
        .iter()
        .map(|&f| {
            let z = y * f;
            let (nll, r) = match link {
                CurveLink::Probit => (-normal::log_cdf(z), score_residual(f, y)),
                CurveLink::Logistic => (softplus(-z), y * sigmoid(-z)),
            };
            nll + 0.5 * (gamma - 1.0) * r * r
        })
        .collect())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AnchorSpec;
    use std::f64::consts::LN_2;

    fn one_env(n: usize) -> Projection {
        Projection::build(&AnchorSpec::discrete("e", &vec!["a"; n])).unwrap()
    }

    #[test]
    fn plain_squared_error_at_gamma_one() {
        let p = one_env(2);
        let ev = regression_loss(&[0.0, 0.0], &[1.0, 2.0], 1.0, &p).unwrap();
        assert_eq!(ev.value, 2.5);
        assert_eq!(ev.gradient, [-1.0, -2.0]);
        assert_eq!(ev.hessian.anchor_weight, 0.0);
    }

    #[test]
    fn penalty_uses_environment_means() {
        let p = one_env(2);
        let ev = regression_loss(&[0.0, 0.0], &[1.0, -1.0], 3.0, &p).unwrap();
        assert!((ev.value - 1.0).abs() < 1e-15);
        let ev = regression_loss(&[0.0, 0.0], &[1.0, 1.0], 3.0, &p).unwrap();
        assert!((ev.value - 3.0).abs() < 1e-15);
        assert_eq!(ev.gradient, [-3.0, -3.0]);
    }

    #[test]
    fn probit_at_zero_score() {
        let p = one_env(1);
        let ev = probit_loss(&[0.0], &[1.0], 1.0, &p).unwrap();
        assert!((ev.value - LN_2).abs() < 1e-15);
        let want = -2.0 * normal::pdf(0.0);
        assert!((ev.gradient[0] - want).abs() < 1e-15);
        assert!((want + 0.797_884_560_802_865_4).abs() < 1e-15);
    }

    #[test]
    fn probit_rejects_bad_labels_and_gamma() {
        let p = one_env(1);
        assert!(probit_loss(&[0.0], &[0.0], 1.0, &p).is_err());
        assert!(probit_loss(&[0.0], &[1.0], 0.5, &p).is_err());
        assert!(regression_loss(&[0.0], &[1.0, 2.0], 1.0, &p).is_err());
    }

    #[test]
    fn probit_extreme_scores_stay_finite() {
        let p = one_env(2);
        let ev = probit_loss(&[-60.0, 60.0], &[1.0, -1.0], 4.0, &p).unwrap();
        assert!(ev.value.is_finite());
        assert!(ev.gradient.iter().chain(&ev.hessian.diagonal).all(|v| v.is_finite()));
    }

    #[test]
    fn curves_at_zero() {
        let v = single_observation_loss_curve(CurveLink::Probit, 1.0, 1.0, &[0.0]).unwrap();
        assert!((v[0] - LN_2).abs() < 1e-15);
        let v = single_observation_loss_curve(CurveLink::Logistic, 1.0, 1.0, &[0.0]).unwrap();
        assert!((v[0] - LN_2).abs() < 1e-15);
    }

    #[test]
    fn value_matches_evaluate() {
        let p = Projection::build(&AnchorSpec::discrete("e", &["a", "b", "a"])).unwrap();
        let f = [0.3, -1.2, 2.0];
        let y = [1.0, -1.0, -1.0];
        for link in [Link::Identity, Link::Probit] {
            let loss = AnchorLoss::new(5.0, link, &p).unwrap();
            let a = loss.value(&f, &y).unwrap();
            let b = loss.evaluate(&f, &y).unwrap().value;
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }
}

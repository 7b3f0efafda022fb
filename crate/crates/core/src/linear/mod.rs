//! Linear anchor regression with elastic-net penalties and empirical-Bayes
//! refitting.
//!
//! Objective for regression, on standardized features `Xs` and centered `y`:
//!
//! ```text
//! (1/2n) [ ‖y − Xs b‖² + (γ−1) ‖P_A (y − Xs b)‖² ] + λ ( η‖b‖₁ + ½(1−η)‖b‖² )
//! ```
//!
//! It is solved as an elastic net on `W y`, `W Xs` with `W = I + (√γ − 1) P_A`,
//! since `WᵀW = I + (γ−1) P_A`. The intercept is not penalized and not
//! transformed; coefficients are reported on the original feature scale.

mod probit;
pub(crate) mod solver;

use crate::data::{Dataset, Task};
use crate::error::{check_len, Error, Result};
use crate::loss::{validate_gamma, Link};
use crate::normal;
use crate::projection::Projection;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use solver::QuadraticProblem;
use std::collections::BTreeSet;

pub use probit::ProbitFitReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticNet {
    pub lambda: f64,
    pub eta: f64,
}

impl ElasticNet {
    pub const NONE: ElasticNet = ElasticNet { lambda: 0.0, eta: 0.0 };

    pub fn new(lambda: f64, eta: f64) -> Result<Self> {
        let enet = ElasticNet { lambda, eta };
        enet.validate()?;
        Ok(enet)
    }

    pub fn lasso(lambda: f64) -> Self {
        ElasticNet { lambda, eta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta must be in [0, 1], got {}", self.eta)));
        }
        Ok(())
    }

    pub(crate) fn l1(&self) -> f64 {
        self.lambda * self.eta
    }

    pub(crate) fn l2(&self) -> f64 {
        self.lambda * (1.0 - self.eta)
    }
}

impl Default for ElasticNet {
    fn default() -> Self {
        ElasticNet::NONE
    }
}

/// Per-feature centering and scaling constants used during fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Population standard deviation; constant columns get scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(mean);
            scales.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Standardization { means, scales }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.scales[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAnchorModel {
    pub feature_names: Vec<String>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub gamma: f64,
    pub enet: ElasticNet,
    pub link: Link,
    pub standardization: Standardization,
    /// Prior width when the model came from an empirical-Bayes refit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_width: Option<f64>,
}

impl LinearAnchorModel {
    pub fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_len(self.beta.len(), x.ncols())?;
        let beta = DVector::from_column_slice(&self.beta);
        Ok((x * beta).iter().map(|v| v + self.intercept).collect())
    }

    /// Scores for the identity link, `Φ(score)` for probit.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let scores = self.predict_scores(x)?;
        Ok(match self.link {
            Link::Identity => scores,
            Link::Probit => scores.into_iter().map(normal::cdf).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Standardized, centered design on which the quadratic problem is built.
struct CenteredDesign {
    standardization: Standardization,
    x: DMatrix<f64>,
    y: DVector<f64>,
    y_mean: f64,
}

impl CenteredDesign {
    fn new(d: &Dataset) -> Self {
        let standardization = Standardization::fit(d.features());
        let x = standardization.apply(d.features());
        let n = d.n() as f64;
        let y_mean = d.outcome().iter().sum::<f64>() / n;
        let y = DVector::from_iterator(d.n(), d.outcome().iter().map(|v| v - y_mean));
        CenteredDesign {
            standardization,
            x,
            y,
            y_mean,
        }
    }

    /// `W v` with `W = I + (√γ − 1) P`.
    fn transform(&mut self, projection: &Projection, gamma: f64) -> Result<()> {
        if gamma == 1.0 {
            return Ok(());
        }
        let shrink = gamma.sqrt() - 1.0;
        let px = projection.apply_columns(&self.x)?;
        self.x += px * shrink;
        let py = projection.apply(self.y.as_slice())?;
        self.y.axpy(shrink, &DVector::from_vec(py), 1.0);
        Ok(())
    }

    /// `(XᵀX / n, Xᵀy / n)`.
    fn gram(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.x.nrows() as f64;
        (self.x.tr_mul(&self.x) / n, self.x.tr_mul(&self.y) / n)
    }

    fn into_model(self, b: &DVector<f64>, gamma: f64, enet: ElasticNet, names: &[String]) -> LinearAnchorModel {
        let beta: Vec<f64> = b
            .iter()
            .zip(&self.standardization.scales)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = beta.iter().zip(&self.standardization.means).map(|(b, m)| b * m).sum();
        LinearAnchorModel {
            feature_names: names.to_vec(),
            beta,
            intercept: self.y_mean - shift,
            gamma,
            enet,
            link: Link::Identity,
            standardization: self.standardization,
            prior_width: None,
        }
    }
}

fn require_task(d: &Dataset, task: Task) -> Result<()> {
    if d.task() != task {
        return Err(Error::Config(format!("expected a {task:?} dataset, got {:?}", d.task())));
    }
    if d.n() == 0 {
        return Err(Error::Data("empty dataset".into()));
    }
    Ok(())
}

/// Linear anchor regression with an elastic-net penalty.
pub fn fit_linear_anchor(d: &Dataset, gamma: f64, enet: ElasticNet) -> Result<LinearAnchorModel> {
    require_task(d, Task::Regression)?;
    validate_gamma(gamma)?;
    enet.validate()?;
    let projection = Projection::build(d.anchor())?;
    let mut design = CenteredDesign::new(d);
    design.transform(&projection, gamma)?;
    let (a, c) = design.gram();
    let penalized = vec![true; d.p()];
    let b = QuadraticProblem {
        a: &a,
        c: &c,
        penalized: &penalized,
        l1: enet.l1(),
        l2: enet.l2(),
    }
    .solve(None)?;
    Ok(design.into_model(&b, gamma, enet, d.column_names()))
}

/// Smallest lasso penalty (γ = 1) at which every coefficient is zero:
/// `max_j |⟨x_j, y − ȳ⟩| / n` on standardized features.
pub fn lambda_max(d: &Dataset) -> Result<f64> {
    require_task(d, Task::Regression)?;
    let (_, c) = CenteredDesign::new(d).gram();
    Ok(c.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Probit anchor classification: minimizes
/// `(1/n) [−Σ log Φ(y f) + ½(γ−1)‖P r(f)‖²] + elastic net`.
pub fn fit_linear_anchor_classification(d: &Dataset, gamma: f64, enet: ElasticNet) -> Result<LinearAnchorModel> {
    Ok(fit_linear_anchor_classification_report(d, gamma, enet)?.0)
}

pub fn fit_linear_anchor_classification_report(
    d: &Dataset,
    gamma: f64,
    enet: ElasticNet,
) -> Result<(LinearAnchorModel, ProbitFitReport)> {
    require_task(d, Task::Classification)?;
    validate_gamma(gamma)?;
    enet.validate()?;
    let projection = Projection::build(d.anchor())?;
    let standardization = Standardization::fit(d.features());
    let xs = standardization.apply(d.features());
    let problem = probit::ProbitProblem {
        x: &xs,
        y: d.outcome(),
        gamma,
        projection: Some(&projection),
        enet,
        prior: None,
    };
    let (theta, report) = problem.solve()?;
    Ok((
        probit_model(theta, standardization, gamma, enet, d.column_names()),
        report,
    ))
}

fn probit_model(
    theta: DVector<f64>,
    standardization: Standardization,
    gamma: f64,
    enet: ElasticNet,
    names: &[String],
) -> LinearAnchorModel {
    let beta: Vec<f64> = theta
        .iter()
        .skip(1)
        .zip(&standardization.scales)
        .map(|(b, s)| b / s)
        .collect();
    let shift: f64 = beta.iter().zip(&standardization.means).map(|(b, m)| b * m).sum();
    LinearAnchorModel {
        feature_names: names.to_vec(),
        beta,
        intercept: theta[0] - shift,
        gamma,
        enet,
        link: Link::Probit,
        standardization,
        prior_width: None,
    }
}

/// Fits by task: squared-error anchor regression or probit anchor classification.
pub fn fit_linear(d: &Dataset, gamma: f64, enet: ElasticNet) -> Result<LinearAnchorModel> {
    match d.task() {
        Task::Regression => fit_linear_anchor(d, gamma, enet),
        Task::Classification => fit_linear_anchor_classification(d, gamma, enet),
    }
}

pub(crate) fn check_feature_names(expected: &[String], got: &[String]) -> Result<()> {
    if expected == got {
        return Ok(());
    }
    let a: BTreeSet<&String> = expected.iter().collect();
    let b: BTreeSet<&String> = got.iter().collect();
    let diff: Vec<&str> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
    if diff.is_empty() {
        Err(Error::Config("feature columns are in a different order than the model's".into()))
    } else {
        Err(Error::Config(format!("feature mismatch: {}", diff.join(", "))))
    }
}

/// Empirical-Bayes refit on target data with a Gaussian prior of width
/// `alpha` centered at the source coefficients:
///
/// ```text
/// argmin_β  ½ [ Σ (y_i − c − X_i β)² + α ‖β − β_source‖² ] / n + elastic net
/// ```
///
/// The intercept is re-estimated without shrinkage. Classification replaces
/// the squared error by the probit negative log-likelihood.
pub fn refit_empirical_bayes(
    source: &LinearAnchorModel,
    target: &Dataset,
    alpha: f64,
    enet: ElasticNet,
) -> Result<LinearAnchorModel> {
    check_feature_names(&source.feature_names, target.column_names())?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be a finite value >= 0, got {alpha}")));
    }
    enet.validate()?;
    if target.n() == 0 {
        return Err(Error::Data("empty target dataset".into()));
    }
    let n = target.n() as f64;
    let mut model = match target.task() {
        Task::Regression => {
            let design = CenteredDesign::new(target);
            let (mut a, mut c) = design.gram();
            for (j, &s) in design.standardization.scales.iter().enumerate() {
                a[(j, j)] += alpha / (n * s * s);
                c[j] += alpha * source.beta[j] / (n * s);
            }
            let penalized = vec![true; target.p()];
            let b = QuadraticProblem {
                a: &a,
                c: &c,
                penalized: &penalized,
                l1: enet.l1(),
                l2: enet.l2(),
            }
            .solve(None)?;
            design.into_model(&b, source.gamma, enet, target.column_names())
        }
        Task::Classification => {
            let standardization = Standardization::fit(target.features());
            let xs = standardization.apply(target.features());
            let problem = probit::ProbitProblem {
                x: &xs,
                y: target.outcome(),
                gamma: 1.0,
                projection: None,
                enet,
                prior: Some(probit::Prior {
                    alpha,
                    center: &source.beta,
                    scales: &standardization.scales,
                }),
            };
            let (theta, _) = problem.solve()?;
            probit_model(theta, standardization, source.gamma, enet, target.column_names())
        }
    };
    model.prior_width = Some(alpha);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AnchorSpec;

    fn tiny() -> Dataset {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = vec![2.0, 4.1, 5.9, 8.0];
        Dataset::new(x, y, AnchorSpec::discrete("e", &["a", "a", "b", "b"]), vec!["x".into()], Task::Regression)
            .unwrap()
    }

    #[test]
    fn constant_outcome_has_zero_lambda_max() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 5.0, 2.0]);
        let d = Dataset::new(x, vec![3.0; 3], AnchorSpec::discrete("e", &["a"; 3]), vec!["x".into()], Task::Regression)
            .unwrap();
        assert_eq!(lambda_max(&d).unwrap(), 0.0);
    }

    #[test]
    fn lambda_max_is_standardized_correlation() {
        // x standardized is [-1, 1]; <x, y - ybar>/n = 0.7 for y = [-0.7, 0.7]
        let x = DMatrix::from_row_slice(2, 1, &[3.0, 5.0]);
        let d = Dataset::new(x, vec![-0.7, 0.7], AnchorSpec::discrete("e", &["a"; 2]), vec!["x".into()], Task::Regression)
            .unwrap();
        assert!((lambda_max(&d).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_hyperparameters() {
        let d = tiny();
        assert!(fit_linear_anchor(&d, 0.5, ElasticNet::NONE).is_err());
        assert!(ElasticNet::new(-1.0, 0.5).is_err());
        assert!(ElasticNet::new(1.0, 1.5).is_err());
        let cls = d.clone();
        assert!(fit_linear_anchor_classification(&cls, 1.0, ElasticNet::NONE).is_err());
    }

    #[test]
    fn refit_reports_feature_mismatch() {
        let d = tiny();
        let mut model = fit_linear_anchor(&d, 1.0, ElasticNet::NONE).unwrap();
        model.feature_names = vec!["z".into()];
        let err = refit_empirical_bayes(&model, &d, 1.0, ElasticNet::NONE).unwrap_err().to_string();
        assert!(err.contains('x') && err.contains('z'), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let model = fit_linear_anchor(&tiny(), 2.0, ElasticNet::new(0.01, 0.5).unwrap()).unwrap();
        let back = LinearAnchorModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
    }
}

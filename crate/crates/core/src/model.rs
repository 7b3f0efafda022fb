//! Common prediction interface and a tagged container for fitted models.

use crate::boosting::BoostedAnchorModel;
use crate::error::Result;
use crate::linear::LinearAnchorModel;
use crate::loss::Link;
use crate::normal;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub trait Predictor: Send + Sync {
    fn feature_names(&self) -> &[String];
    fn link(&self) -> Link;
    fn gamma(&self) -> f64;
    /// Raw scores (before the link).
    fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>>;

    /// Scores for regression, `Φ(score)` for probit models.
    fn predict_response(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let scores = self.predict_scores(x)?;
        Ok(match self.link() {
            Link::Identity => scores,
            Link::Probit => scores.into_iter().map(normal::cdf).collect(),
        })
    }
}

impl Predictor for LinearAnchorModel {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
    fn link(&self) -> Link {
        self.link
    }
    fn gamma(&self) -> f64 {
        self.gamma
    }
    fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        LinearAnchorModel::predict_scores(self, x)
    }
}

impl Predictor for BoostedAnchorModel {
    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }
    fn link(&self) -> Link {
        self.config.link
    }
    fn gamma(&self) -> f64 {
        self.config.gamma
    }
    fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        BoostedAnchorModel::predict_scores(self, x)
    }
}

/// Either kind of fitted model, as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AnyModel {
    Linear(LinearAnchorModel),
    Boosted(BoostedAnchorModel),
}

impl AnyModel {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            AnyModel::Linear(m) => m,
            AnyModel::Boosted(m) => m,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Predictor for AnyModel {
    fn feature_names(&self) -> &[String] {
        self.as_predictor().feature_names()
    }
    fn link(&self) -> Link {
        self.as_predictor().link()
    }
    fn gamma(&self) -> f64 {
        self.as_predictor().gamma()
    }
    fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.as_predictor().predict_scores(x)
    }
}

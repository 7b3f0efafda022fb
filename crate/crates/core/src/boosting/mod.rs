//! Anchor boosting: gradient-boosted regression trees minimizing the anchor loss.
//!
//! Each round fits a least-squares tree to the negative gradient of the
//! anchor loss, then replaces its leaf values by the Newton step of the loss
//! restricted to the tree (exact for squared error), and adds the tree scaled
//! by the learning rate.

pub mod binning;
mod leaves;
pub mod tree;

pub use binning::{BinnedMatrix, FeatureBins};
pub use leaves::{first_order_leaf_values, solve_leaf_values};
pub use tree::{grow_tree, GrowthParams, LeafAssignment, Node, Tree};

use crate::data::{Dataset, Task};
use crate::error::{check_len, Error, Result};
use crate::linear::check_feature_names;
use crate::loss::{probit_loss, regression_loss, validate_gamma, AnchorLoss, Link};
use crate::normal;
use crate::projection::Projection;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LeafUpdate {
    /// Newton step on the anchor loss.
    #[default]
    SecondOrder,
    /// Gradient sum over γ = 1 curvature; diagnostic only.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_gain_to_split: f64,
    pub min_samples_leaf: usize,
    pub histogram_bins: usize,
    pub gamma: f64,
    pub link: Link,
    pub leaf_update: LeafUpdate,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            num_trees: 1000,
            learning_rate: 0.1,
            max_depth: 3,
            min_gain_to_split: 0.1,
            min_samples_leaf: 20,
            histogram_bins: 255,
            gamma: 1.0,
            link: Link::Identity,
            leaf_update: LeafUpdate::SecondOrder,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        validate_gamma(self.gamma)?;
        if self.num_trees < 1 {
            return Err(Error::Config("num_trees must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        if !(2..=256).contains(&self.histogram_bins) {
            return Err(Error::Config("histogram_bins must be in [2, 256]".into()));
        }
        if self.min_gain_to_split.is_nan() || self.min_gain_to_split < 0.0 {
            return Err(Error::Config("min_gain_to_split must be >= 0".into()));
        }
        Ok(())
    }

    pub fn growth(&self) -> GrowthParams {
        GrowthParams {
            max_depth: self.max_depth,
            min_gain_to_split: self.min_gain_to_split,
            min_samples_leaf: self.min_samples_leaf,
        }
    }

    fn check_task(&self, task: Task) -> Result<()> {
        match (task, self.link) {
            (Task::Regression, Link::Identity) | (Task::Classification, Link::Probit) => Ok(()),
            (task, link) => Err(Error::Config(format!("{link:?} link cannot be used for {task:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedAnchorModel {
    pub version: u32,
    pub f0: f64,
    pub config: BoostConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl BoostedAnchorModel {
    /// `f0 + lr · Σ_j tree_j(x)`.
    pub fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.predict_prefix(x, self.trees.len())
    }

    /// Scores from the first `num_trees` trees only.
    pub fn predict_prefix(&self, x: &DMatrix<f64>, num_trees: usize) -> Result<Vec<f64>> {
        check_len(self.feature_names.len(), x.ncols())?;
        let trees = &self.trees[..num_trees.min(self.trees.len())];
        let lr = self.config.learning_rate;
        Ok((0..x.nrows())
            .map(|i| {
                let mut s = 0.0;
                for t in trees {
                    s += t.predict_row(|j| x[(i, j)]);
                }
                self.f0 + lr * s
            })
            .collect())
    }

    /// Scores for the identity link, probabilities `Φ(score)` for probit.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let s = self.predict_scores(x)?;
        Ok(match self.config.link {
            Link::Identity => s,
            Link::Probit => s.into_iter().map(normal::cdf).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BoostedAnchorModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported model version {}", model.version)));
        }
        let p = model.feature_names.len();
        if model.trees.iter().any(|t| t.max_feature_index().is_some_and(|j| j >= p)) {
            return Err(Error::Data("tree references a feature beyond the model's columns".into()));
        }
        Ok(model)
    }
}

/// Mean outcome for the identity link, `Φ⁻¹(prevalence)` for probit.
pub fn initial_score(outcome: &[f64], link: Link) -> Result<f64> {
    if outcome.is_empty() {
        return Err(Error::Data("cannot initialize from zero rows".into()));
    }
    let n = outcome.len() as f64;
    match link {
        Link::Identity => Ok(outcome.iter().sum::<f64>() / n),
        Link::Probit => {
            let prevalence = outcome.iter().map(|y| (y + 1.0) / 2.0).sum::<f64>() / n;
            if prevalence <= 0.0 || prevalence >= 1.0 {
                return Err(Error::Data(format!(
                    "probit initialization needs both classes (prevalence {prevalence})"
                )));
            }
            Ok(normal::ppf(prevalence))
        }
    }
}

/// Round-by-round boosting state on a training set.
pub struct Booster<'d> {
    data: &'d Dataset,
    config: BoostConfig,
    projection: Projection,
    bins: FeatureBins,
    binned: BinnedMatrix,
    scores: Vec<f64>,
    f0: f64,
    trees: Vec<Tree>,
    loss: f64,
}

impl<'d> Booster<'d> {
    pub fn new(data: &'d Dataset, config: BoostConfig) -> Result<Self> {
        config.validate()?;
        config.check_task(data.task())?;
        let projection = Projection::build(data.anchor())?;
        let f0 = initial_score(data.outcome(), config.link)?;
        let bins = FeatureBins::fit(data.features(), config.histogram_bins);
        let binned = bins.transform(data.features());
        let scores = vec![f0; data.n()];
        let loss = AnchorLoss::new(config.gamma, config.link, &projection)?.value(&scores, data.outcome())?;
        Ok(Booster {
            data,
            config,
            projection,
            bins,
            binned,
            scores,
            f0,
            trees: Vec::new(),
            loss,
        })
    }

    /// Anchor loss at the current training scores.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// Adds one tree and returns the new training loss.
    pub fn step(&mut self) -> Result<f64> {
        let round = self.trees.len() + 1;
        let (gamma, link) = (self.config.gamma, self.config.link);
        let eval = match link {
            Link::Identity => regression_loss(&self.scores, self.data.outcome(), gamma, &self.projection)?,
            Link::Probit => probit_loss(&self.scores, self.data.outcome(), gamma, &self.projection)?,
        };
        let negative_gradient: Vec<f64> = eval.gradient.iter().map(|g| -g).collect();
        let (mut tree, assignment) = grow_tree(&self.binned, &self.bins, &negative_gradient, &self.config.growth());
        let values = match self.config.leaf_update {
            LeafUpdate::SecondOrder => solve_leaf_values(&assignment, &eval, &self.projection),
            LeafUpdate::FirstOrder => first_order_leaf_values(&assignment, &eval),
        }
        .map_err(|e| Error::Numerical(format!("round {round}: {e}")))?;
        let lr = self.config.learning_rate;
        for (s, &l) in self.scores.iter_mut().zip(&assignment.leaf_index) {
            *s += lr * values[l as usize];
        }
        tree.set_leaf_values(values);
        self.trees.push(tree);
        self.loss = AnchorLoss::new(gamma, link, &self.projection)?.value(&self.scores, self.data.outcome())?;
        if !self.loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite training loss at round {round}")));
        }
        Ok(self.loss)
    }

    pub fn finish(self) -> BoostedAnchorModel {
        BoostedAnchorModel {
            version: MODEL_FORMAT_VERSION,
            f0: self.f0,
            config: self.config,
            feature_names: self.data.column_names().to_vec(),
            trees: self.trees,
        }
    }
}

/// Training loss before any tree (round 0) and after every round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub losses: Vec<f64>,
}

pub fn fit_boosted(d: &Dataset, config: &BoostConfig) -> Result<BoostedAnchorModel> {
    Ok(fit_boosted_with_log(d, config)?.0)
}

pub fn fit_boosted_with_log(d: &Dataset, config: &BoostConfig) -> Result<(BoostedAnchorModel, TrainingLog)> {
    let mut booster = Booster::new(d, config.clone())?;
    let mut losses = Vec::with_capacity(config.num_trees + 1);
    losses.push(booster.loss());
    for _ in 0..config.num_trees {
        losses.push(booster.step()?);
    }
    Ok((booster.finish(), TrainingLog { losses }))
}

/// Refits leaf values on target data while keeping every tree's structure.
///
/// Trees are visited in order, tracking the refit scores on the target rows
/// from `f0` (not re-estimated). Each tree's new leaf values are the γ = 1
/// Newton step on the rows routed to it; leaves without target rows keep
/// their value; the result is `dr · old + (1 − dr) · new`.
pub fn refit_leaves(source: &BoostedAnchorModel, target: &Dataset, decay_rate: f64) -> Result<BoostedAnchorModel> {
    if !(0.0..=1.0).contains(&decay_rate) {
        return Err(Error::Config(format!("decay rate must be in [0, 1], got {decay_rate}")));
    }
    check_feature_names(&source.feature_names, target.column_names())?;
    source.config.check_task(target.task())?;
    let mut model = source.clone();
    if decay_rate == 1.0 {
        return Ok(model);
    }
    let x = target.features();
    let y = target.outcome();
    let lr = source.config.learning_rate;
    let mut scores = vec![source.f0; target.n()];
    for tree in model.trees.iter_mut() {
        let assignment = tree.assign(x);
        let (gradient, curvature): (Vec<f64>, Vec<f64>) = match source.config.link {
            Link::Identity => scores.iter().zip(y).map(|(f, y)| (f - y, 1.0)).unzip(),
            Link::Probit => {
                let trivial = Projection::group_mean(&vec![0; target.n()], 1);
                let ev = probit_loss(&scores, y, 1.0, &trivial)?;
                (ev.gradient, ev.hessian.diagonal)
            }
        };
        let g = assignment.leaf_sums(&gradient);
        let h = assignment.leaf_sums(&curvature);
        let counts = assignment.counts();
        let blended: Vec<f64> = tree
            .leaf_values()
            .iter()
            .enumerate()
            .map(|(l, &old)| {
                if counts[l] == 0 || h[l] <= 0.0 {
                    old
                } else {
                    let new = -g[l] / h[l];
                    decay_rate * old + (1.0 - decay_rate) * new
                }
            })
            .collect();
        for (s, &l) in scores.iter_mut().zip(&assignment.leaf_index) {
            *s += lr * blended[l as usize];
        }
        tree.set_leaf_values(blended);
    }
    Ok(model)
}

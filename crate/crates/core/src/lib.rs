//! Anchor regression and anchor boosting for prediction under distribution
//! shift across heterogeneous environments.
//!
//! The crate covers linear anchor regression with elastic-net penalties,
//! gradient-boosted trees minimizing the anchor loss (squared error or probit),
//! refitting of source models on small target samples, model selection, a
//! regime analysis of sample-size curves, and a synthetic structural causal
//! model generator.

pub mod boosting;
pub mod data;
pub mod error;
pub mod linear;
pub mod loss;
pub mod model;
pub mod normal;
pub mod projection;
pub mod regimes;
pub mod selection;
pub mod sim;

pub use data::{load_csv, AnchorSpec, CsvSchema, Dataset, Task};
pub use error::{Error, ErrorKind, Result};
pub use loss::{AnchorLoss, HessianStructure, Link, LossEvaluation};
pub use projection::Projection;
pub use boosting::{fit_boosted, refit_leaves, BoostConfig, BoostedAnchorModel};
pub use linear::{fit_linear_anchor, lambda_max, refit_empirical_bayes, ElasticNet, LinearAnchorModel};
pub use model::{AnyModel, Predictor};
pub use sim::AnchorScm;

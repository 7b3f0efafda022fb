//! Run configuration: an optional JSON file whose keys are overridden by
//! command-line flags.

use anchorboost::regimes::{TargetOnlySpec, Tolerance};
use anchorboost::selection::{CvGrid, Metric};
use anchorboost::{BoostConfig, CsvSchema, Error, Result, Task};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Boosted,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub outcome: Option<String>,
    pub anchors: Option<Vec<String>>,
    pub group: Option<String>,
    pub task: Option<Task>,
    pub discrete_anchor: Option<bool>,

    pub model: Option<ModelKind>,
    pub model_file: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub boost: Option<BoostConfig>,
    pub log: Option<PathBuf>,

    pub sources: Option<Vec<PathBuf>>,
    pub decay_rate: Option<f64>,
    pub alpha: Option<f64>,
    pub grid: Option<CvGrid>,
    pub folds: Option<usize>,
    pub table: Option<PathBuf>,
    pub metric: Option<Metric>,

    pub pool: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub curves: Option<PathBuf>,
    pub curves_out: Option<PathBuf>,
    pub sizes: Option<Vec<usize>>,
    pub seeds: Option<u64>,
    pub tolerance: Option<Tolerance>,
    pub target_only: Option<TargetOnlySpec>,

    pub scm: Option<PathBuf>,
    pub scm_out: Option<PathBuf>,
    pub n: Option<usize>,
    pub shift_scale: Option<f64>,
    pub stream: Option<u64>,
    pub env_label: Option<String>,

    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn folds(&self) -> usize {
        self.folds.unwrap_or(5)
    }

    pub fn grid(&self) -> CvGrid {
        self.grid.clone().unwrap_or_default()
    }

    pub fn schema(&self) -> Result<CsvSchema> {
        Ok(CsvSchema {
            outcome: required(&self.outcome, "outcome")?.clone(),
            anchors: required(&self.anchors, "anchors")?.clone(),
            group: self.group.clone(),
            task: self.task.unwrap_or(Task::Regression),
            discrete_anchor: self.discrete_anchor.unwrap_or(false),
        })
    }

    /// Boosting settings with the link implied by the task and γ from the
    /// top-level setting when given.
    pub fn boost_config(&self, task: Task) -> Result<BoostConfig> {
        let mut c = self.boost.clone().unwrap_or_default();
        c.link = match task {
            Task::Regression => anchorboost::Link::Identity,
            Task::Classification => anchorboost::Link::Probit,
        };
        if let Some(g) = self.gamma {
            c.gamma = g;
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Config(format!("missing required setting '{name}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"gamma": 2, "colour": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"gamma": 2, "folds": 3}"#).unwrap();
        assert_eq!((c.gamma, c.folds(), c.seed()), (Some(2.0), 3, 0));
    }

    #[test]
    fn boost_settings_take_link_from_task_and_top_level_gamma() {
        let c: RunConfig = serde_json::from_str(r#"{"gamma": 8, "boost": {"num_trees": 5, "gamma": 2}}"#).unwrap();
        let b = c.boost_config(Task::Classification).unwrap();
        assert_eq!((b.num_trees, b.gamma, b.link), (5, 8.0, anchorboost::Link::Probit));
        let bad: RunConfig = serde_json::from_str(r#"{"gamma": 0.5}"#).unwrap();
        assert!(bad.boost_config(Task::Regression).is_err());
    }

    #[test]
    fn schema_needs_outcome_and_anchors() {
        let c = RunConfig::default();
        let err = c.schema().unwrap_err();
        assert!(err.to_string().contains("'outcome'"));
    }
}

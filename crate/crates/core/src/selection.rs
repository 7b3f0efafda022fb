//! Metrics and cross-validation: leave-one-environment-out selection of γ and
//! k-fold selection of refit hyperparameters on target data.

use crate::boosting::refit_leaves;
use crate::data::{Dataset, Task};
use crate::error::{check_len, Error, Result};
use crate::linear::refit_empirical_bayes;
use crate::model::{AnyModel, Predictor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub use crate::loss::probit_nll;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Nll,
    Auprc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Nll => "nll",
            Metric::Auprc => "auprc",
        }
    }

    pub fn lower_is_better(self) -> bool {
        !matches!(self, Metric::Auprc)
    }

    /// MSE for regression, mean probit NLL for classification.
    pub fn default_for(task: Task) -> Metric {
        match task {
            Task::Regression => Metric::Mse,
            Task::Classification => Metric::Nll,
        }
    }

    pub fn evaluate(self, scores: &[f64], outcome: &[f64]) -> Result<f64> {
        match self {
            Metric::Mse => mse(scores, outcome),
            Metric::Nll => probit_nll(scores, outcome),
            Metric::Auprc => auprc(scores, outcome),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

pub fn evaluate_model(model: &dyn Predictor, d: &Dataset, metric: Metric) -> Result<MetricReport> {
    let scores = model.predict_scores(d.features())?;
    Ok(MetricReport {
        metric,
        value: metric.evaluate(&scores, d.outcome())?,
        n: d.n(),
    })
}

pub fn mse(pred: &[f64], outcome: &[f64]) -> Result<f64> {
    check_len(outcome.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::Data("empty input".into()));
    }
    Ok(pred.iter().zip(outcome).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pred.len() as f64)
}

/// Step-wise average precision `Σ (R_k − R_{k−1}) P_k` over score thresholds,
/// with tied scores entering together.
pub fn auprc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_len(labels.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y > 0.0).count();
    if positives == 0 {
        return Err(Error::Data("average precision needs at least one positive label".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut new_tp = 0;
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] > 0.0 {
                new_tp += 1;
            }
            seen += 1;
            i += 1;
        }
        if new_tp > 0 {
            tp += new_tp;
            ap += (new_tp as f64 / positives as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

/// One cell of a leave-one-environment-out score table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub gamma: f64,
    pub holdout_env: String,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSelection {
    pub gamma: f64,
    /// Unweighted mean over held-out environments, per grid value.
    pub mean_scores: Vec<(f64, f64)>,
    pub table: Vec<ScoreRow>,
}

/// Writes a score table as CSV with columns `gamma,holdout_env,metric,value,n`.
pub fn write_score_table<W: std::io::Write>(rows: &[ScoreRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["gamma", "holdout_env", "metric", "value", "n"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for r in rows {
        out.write_record([
            r.gamma.to_string(),
            r.holdout_env.clone(),
            r.metric.name().to_string(),
            r.value.to_string(),
            r.n.to_string(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub type Trainer<'a> = dyn Fn(&Dataset, f64) -> Result<Box<dyn Predictor>> + Sync + 'a;

fn validate_grid(name: &str, grid: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if let Some(v) = grid.iter().find(|&&v| !ok(v)) {
        return Err(Error::Config(format!("invalid {name} grid value {v}")));
    }
    Ok(())
}

/// Leave-one-environment-out selection of γ: for every γ and held-out
/// environment, train on the rest and score the holdout (MSE for regression,
/// probit NLL for classification). The smallest mean wins, ties going to the
/// smaller γ.
pub fn loeo_select_gamma(d: &Dataset, gamma_grid: &[f64], trainer: &Trainer) -> Result<GammaSelection> {
    validate_grid("gamma", gamma_grid, |g| g >= 1.0 && g.is_finite())?;
    let levels = d
        .anchor()
        .levels()
        .ok_or_else(|| Error::Unsupported("LOEO-CV requires a discrete anchor".into()))?
        .to_vec();
    if levels.len() < 2 {
        return Err(Error::Data("LOEO-CV needs at least two environments".into()));
    }
    let metric = Metric::default_for(d.task());
    let splits = levels
        .iter()
        .map(|l| d.split_by_environment(l))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..gamma_grid.len())
        .flat_map(|g| (0..levels.len()).map(move |e| (g, e)))
        .collect();
    let table = cells
        .par_iter()
        .map(|&(g, e)| {
            let (train, test) = &splits[e];
            let model = trainer(train, gamma_grid[g])?;
            let report = evaluate_model(model.as_ref(), test, metric)?;
            Ok(ScoreRow {
                gamma: gamma_grid[g],
                holdout_env: levels[e].clone(),
                metric,
                value: report.value,
                n: report.n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_scores: Vec<(f64, f64)> = gamma_grid
        .iter()
        .enumerate()
        .map(|(g, &gamma)| {
            let rows = &table[g * levels.len()..(g + 1) * levels.len()];
            (gamma, rows.iter().map(|r| r.value).sum::<f64>() / levels.len() as f64)
        })
        .collect();
    let (gamma, _) = mean_scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .expect("grid is non-empty");
    Ok(GammaSelection {
        gamma,
        mean_scores,
        table,
    })
}

/// Hyperparameter grids for selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvGrid {
    pub gamma_grid: Vec<f64>,
    pub dr_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid {
            gamma_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            dr_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            alpha_grid: (0..=8).map(|i| 10f64.powf(1.0 - 0.5 * i as f64)).collect(),
            lambda_grid: vec![0.0],
            eta_grid: vec![0.5],
        }
    }
}

impl CvGrid {
    pub fn validate(&self) -> Result<()> {
        validate_grid("gamma", &self.gamma_grid, |g| g >= 1.0 && g.is_finite())?;
        validate_grid("decay rate", &self.dr_grid, |v| (0.0..=1.0).contains(&v))?;
        validate_grid("alpha", &self.alpha_grid, |v| v > 0.0 && v.is_finite())?;
        validate_grid("lambda", &self.lambda_grid, |v| v >= 0.0 && v.is_finite())?;
        validate_grid("eta", &self.eta_grid, |v| (0.0..=1.0).contains(&v))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitParameter {
    DecayRate,
    PriorWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefitCvRow {
    pub source: usize,
    pub gamma: f64,
    pub parameter: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefitSelection {
    /// Index into the candidate source models.
    pub source: usize,
    pub gamma: f64,
    pub parameter_kind: RefitParameter,
    pub parameter: f64,
    pub score: f64,
    pub table: Vec<RefitCvRow>,
}

/// Fold id per row: whole groups when the dataset has them, else single rows.
pub fn fold_assignment(d: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    let (units, unit_of_row) = sampling_units(d);
    if units < k {
        return Err(Error::Data(format!("{units} sampling units cannot be split into {k} folds")));
    }
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of_unit = vec![0; units];
    for (pos, &u) in order.iter().enumerate() {
        fold_of_unit[u] = pos % k;
    }
    Ok(unit_of_row.iter().map(|&u| fold_of_unit[u]).collect())
}

/// Number of sampling units and the unit of every row (groups in order of
/// first appearance, or rows).
pub fn sampling_units(d: &Dataset) -> (usize, Vec<usize>) {
    match d.groups() {
        Some(groups) => {
            let mut ids: HashMap<&str, usize> = HashMap::new();
            let unit_of_row = groups
                .iter()
                .map(|g| {
                    let next = ids.len();
                    *ids.entry(g.as_str()).or_insert(next)
                })
                .collect();
            (ids.len(), unit_of_row)
        }
        None => (d.n(), (0..d.n()).collect()),
    }
}

/// Refits `source` on `train` with the given decay rate (boosted) or prior
/// width (linear).
pub fn refit_model(source: &AnyModel, train: &Dataset, parameter: f64) -> Result<AnyModel> {
    Ok(match source {
        AnyModel::Boosted(m) => AnyModel::Boosted(refit_leaves(m, train, parameter)?),
        AnyModel::Linear(m) => AnyModel::Linear(refit_empirical_bayes(m, train, parameter, m.enet)?),
    })
}

/// Joint k-fold selection of the source model (its γ) and the refit
/// parameter on target data. Ties go to the larger decay rate / prior width.
pub fn kfold_refit_select(sources: &[AnyModel], target: &Dataset, grid: &CvGrid, k: usize, seed: u64) -> Result<RefitSelection> {
    if sources.is_empty() {
        return Err(Error::Config("no source models".into()));
    }
    let boosted = matches!(sources[0], AnyModel::Boosted(_));
    if sources.iter().any(|s| matches!(s, AnyModel::Boosted(_)) != boosted) {
        return Err(Error::Config("source models must all be linear or all boosted".into()));
    }
    let (kind, params) = if boosted {
        validate_grid("decay rate", &grid.dr_grid, |v| (0.0..=1.0).contains(&v))?;
        (RefitParameter::DecayRate, &grid.dr_grid)
    } else {
        validate_grid("alpha", &grid.alpha_grid, |v| v >= 0.0 && v.is_finite())?;
        (RefitParameter::PriorWidth, &grid.alpha_grid)
    };
    let folds = fold_assignment(target, k, seed)?;
    let metric = Metric::default_for(target.task());
    let splits: Vec<(Dataset, Dataset)> = (0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..target.n()).partition(|&i| folds[i] == f);
            (target.subset(&train), target.subset(&val))
        })
        .collect();
    let cells: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|s| (0..params.len()).map(move |p| (s, p)))
        .collect();
    let table = cells
        .par_iter()
        .map(|&(s, p)| {
            let mut total = 0.0;
            for (train, val) in &splits {
                let model = refit_model(&sources[s], train, params[p])?;
                total += evaluate_model(&model, val, metric)?.value;
            }
            Ok(RefitCvRow {
                source: s,
                gamma: sources[s].gamma(),
                parameter: params[p],
                value: total / k as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = table
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value).then(b.parameter.total_cmp(&a.parameter)))
        .expect("non-empty grid");
    Ok(RefitSelection {
        source: best.source,
        gamma: best.gamma,
        parameter_kind: kind,
        parameter: best.parameter,
        score: best.value,
        table: table.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_average_precision() {
        let ap = auprc(&[0.9, 0.8, 0.7, 0.6], &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(auprc(&[0.1, 0.9, 0.8], &[-1.0, 1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn tied_scores_enter_together() {
        // all tied: precision = prevalence
        let ap = auprc(&[0.5; 4], &[1.0, -1.0, -1.0, -1.0]).unwrap();
        assert_eq!(ap, 0.25);
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(auprc(&[0.1, 0.2], &[-1.0, -1.0]).is_err());
    }

    #[test]
    fn mse_basic() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn default_grid_matches_published_values() {
        let g = CvGrid::default();
        assert_eq!(g.dr_grid, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(g.alpha_grid.len(), 9);
        assert!((g.alpha_grid[0] - 10.0).abs() < 1e-12);
        assert!((g.alpha_grid[1] - 10f64.sqrt()).abs() < 1e-12);
        assert!((g.alpha_grid[8] - 1e-3).abs() < 1e-15);
    }
}

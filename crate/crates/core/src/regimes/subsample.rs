//! Learning curves on nested subsamples of the target data.

use super::{CurvePoint, Strategy};
use crate::boosting::{fit_boosted, BoostConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linear::{fit_linear, ElasticNet};
use crate::model::AnyModel;
use crate::selection::{evaluate_model, fold_assignment, kfold_refit_select, refit_model, sampling_units, CvGrid, Metric};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fits a target-only model on a subsample; the `u64` is the CV seed.
pub type TargetTrainer<'a> = dyn Fn(&Dataset, u64) -> Result<AnyModel> + Sync + 'a;

/// How each strategy turns a subsample into a model.
pub enum StrategyRunner<'a> {
    /// A fixed model that ignores the subsample.
    SourceOnly(&'a AnyModel),
    /// k-fold selection of source model and refit parameter, then a refit
    /// on the whole subsample.
    Refit {
        sources: &'a [AnyModel],
        grid: &'a CvGrid,
        folds: usize,
    },
    TargetOnly(&'a TargetTrainer<'a>),
}

impl StrategyRunner<'_> {
    pub fn strategy(&self) -> Strategy {
        match self {
            StrategyRunner::SourceOnly(_) => Strategy::SourceOnly,
            StrategyRunner::Refit { .. } => Strategy::Refit,
            StrategyRunner::TargetOnly(_) => Strategy::TargetOnly,
        }
    }
}

/// Built-in target-only learners with k-fold selection of their one
/// hyperparameter on the subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetOnlySpec {
    /// Plain (γ = 1) elastic net; λ is chosen from `lambda_grid`.
    Linear { lambda_grid: Vec<f64>, eta: f64 },
    /// Boosting with the number of trees chosen from `tree_grid`.
    Boosted { config: BoostConfig, tree_grid: Vec<usize> },
}

impl Default for TargetOnlySpec {
    fn default() -> Self {
        TargetOnlySpec::Linear {
            lambda_grid: vec![0.0, 0.001, 0.01, 0.1],
            eta: 0.5,
        }
    }
}

impl TargetOnlySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TargetOnlySpec::Linear { lambda_grid, eta } => {
                if lambda_grid.is_empty() {
                    return Err(Error::Config("target-only lambda grid is empty".into()));
                }
                for &l in lambda_grid {
                    ElasticNet::new(l, *eta)?;
                }
            }
            TargetOnlySpec::Boosted { config, tree_grid } => {
                config.validate()?;
                if tree_grid.is_empty() || tree_grid.contains(&0) {
                    return Err(Error::Config("target-only tree grid must hold positive counts".into()));
                }
            }
        }
        Ok(())
    }

    /// Selects the hyperparameter by `folds`-fold CV on `d`, then fits on all
    /// of `d`. Candidates whose fit fails in some fold are skipped; ties go to
    /// the stronger regularization (larger λ, fewer trees).
    pub fn fit(&self, d: &Dataset, folds: usize, seed: u64) -> Result<AnyModel> {
        self.validate()?;
        let fold_of = fold_assignment(d, folds, seed)?;
        let metric = Metric::default_for(d.task());
        let splits: Vec<(Dataset, Dataset)> = (0..folds)
            .map(|f| {
                let (val, train): (Vec<usize>, Vec<usize>) = (0..d.n()).partition(|&i| fold_of[i] == f);
                (d.subset(&train), d.subset(&val))
            })
            .collect();
        match self {
            TargetOnlySpec::Linear { lambda_grid, eta } => {
                let scores: Vec<f64> = lambda_grid
                    .iter()
                    .map(|&lambda| {
                        let enet = ElasticNet::new(lambda, *eta)?;
                        let mut total = 0.0;
                        for (train, val) in &splits {
                            match fit_linear(train, 1.0, enet) {
                                Ok(m) => total += evaluate_model(&m, val, metric)?.value,
                                Err(e) if e.kind() == crate::ErrorKind::Config => return Err(e),
                                Err(_) => return Ok(f64::INFINITY),
                            }
                        }
                        Ok(total)
                    })
                    .collect::<Result<_>>()?;
                let best = select(lambda_grid.iter().map(|&l| (l, -l)), &scores)?;
                Ok(AnyModel::Linear(fit_linear(d, 1.0, ElasticNet::new(best, *eta)?)?))
            }
            TargetOnlySpec::Boosted { config, tree_grid } => {
                let max_trees = *tree_grid.iter().max().expect("validated non-empty");
                let config = BoostConfig {
                    num_trees: max_trees,
                    ..config.clone()
                };
                let mut scores = vec![0.0; tree_grid.len()];
                for (train, val) in &splits {
                    let model = fit_boosted(train, &config)?;
                    for (s, &t) in scores.iter_mut().zip(tree_grid) {
                        *s += metric.evaluate(&model.predict_prefix(val.features(), t)?, val.outcome())?;
                    }
                }
                let best = select(tree_grid.iter().map(|&t| (t, t as f64)), &scores)?;
                let model = fit_boosted(d, &BoostConfig { num_trees: best, ..config })?;
                Ok(AnyModel::Boosted(model))
            }
        }
    }
}

/// Candidate with the lowest score; `tie` ranks equal scores (smaller wins).
fn select<T: Copy>(candidates: impl Iterator<Item = (T, f64)>, scores: &[f64]) -> Result<T> {
    candidates
        .zip(scores)
        .filter(|(_, s)| s.is_finite())
        .min_by(|((_, ta), sa), ((_, tb), sb)| sa.total_cmp(sb).then(ta.total_cmp(tb)))
        .map(|((c, _), _)| c)
        .ok_or_else(|| Error::Numerical("no target-only candidate could be fitted in every fold".into()))
}

/// `25, 35, 50, 70, 100, 140, 200, ...` up to and including `max`.
pub fn default_sizes(max: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let (mut a, mut b) = (25, 35);
    while a <= max {
        sizes.push(a);
        if b <= max {
            sizes.push(b);
        }
        (a, b) = (2 * a, 2 * b);
    }
    sizes
}

/// Rows of the nested subsamples for one seed: entry `i` holds the rows of
/// the first `sizes[i]` sampling units in a seeded shuffle, or `None` when
/// there are fewer units than that.
pub fn nested_subsets(d: &Dataset, sizes: &[usize], seed: u64) -> Vec<Option<Vec<usize>>> {
    let (units, unit_of_row) = sampling_units(d);
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rank = vec![0; units];
    for (pos, &u) in order.iter().enumerate() {
        rank[u] = pos;
    }
    sizes
        .iter()
        .map(|&m| {
            (m <= units).then(|| (0..d.n()).filter(|&i| rank[unit_of_row[i]] < m).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleOutput {
    pub points: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

/// Performance on `test` of models built from nested subsamples of `pool`,
/// for every seed and size. Points are ordered by seed, then size.
pub fn subsample_curve(
    pool: &Dataset,
    test: &Dataset,
    sizes: &[usize],
    seeds: &[u64],
    runner: &StrategyRunner,
    metric: Metric,
) -> Result<SubsampleOutput> {
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sizes must be positive and strictly increasing".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("no subsampling seeds".into()));
    }
    if let StrategyRunner::Refit { grid, .. } = runner {
        grid.validate()?;
    }
    let strategy = runner.strategy();
    let (units, _) = sampling_units(pool);
    let warnings = sizes
        .iter()
        .filter(|&&m| m > units)
        .map(|m| format!("size {m} exceeds the {units} available sampling units; skipped"))
        .collect();
    let fixed = match runner {
        StrategyRunner::SourceOnly(model) => Some(evaluate_model(*model, test, metric)?.value),
        _ => None,
    };
    let cells: Vec<(u64, usize, Vec<usize>)> = seeds
        .iter()
        .flat_map(|&seed| {
            nested_subsets(pool, sizes, seed)
                .into_iter()
                .zip(sizes)
                .filter_map(move |(rows, &m)| rows.map(|r| (seed, m, r)))
        })
        .collect();
    let points = cells
        .par_iter()
        .map(|(seed, m, rows)| {
            let value = match (fixed, runner) {
                (Some(v), _) => v,
                (None, StrategyRunner::Refit { sources, grid, folds }) => {
                    let sub = pool.subset(rows);
                    let sel = kfold_refit_select(sources, &sub, grid, *folds, *seed)?;
                    let model = refit_model(&sources[sel.source], &sub, sel.parameter)?;
                    evaluate_model(&model, test, metric)?.value
                }
                (None, StrategyRunner::TargetOnly(trainer)) => {
                    let model = trainer(&pool.subset(rows), *seed)?;
                    evaluate_model(model.as_predictor(), test, metric)?.value
                }
                (None, StrategyRunner::SourceOnly(_)) => unreachable!("evaluated once above"),
            };
            Ok(CurvePoint {
                strategy,
                seed: *seed,
                n: *m,
                metric,
                value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsampleOutput { points, warnings })
}

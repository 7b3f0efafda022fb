//! Subcommand implementations.

use crate::config::{required, ModelKind, RunConfig};
use crate::io::{read_features, write_atomic, write_text};
use anchorboost::boosting::fit_boosted_with_log;
use anchorboost::linear::fit_linear;
use anchorboost::regimes::{
    default_sizes, read_curve_csv, subsample_curve, transition_points, write_curve_csv, RegimeCurves, StrategyRunner,
};
use anchorboost::selection::{
    evaluate_model, kfold_refit_select, loeo_select_gamma, refit_model, sampling_units, write_score_table, Metric,
    RefitParameter, Trainer,
};
use anchorboost::{
    fit_boosted, load_csv, AnchorScm, AnyModel, Dataset, ElasticNet, Error, Predictor, Result,
};
use serde::Serialize;
use std::path::Path;

fn load_model(path: &Path) -> Result<AnyModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    AnyModel::from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn load_data(c: &RunConfig, path: &Path) -> Result<Dataset> {
    load_csv(path, &c.schema()?)
}

fn enet(c: &RunConfig) -> Result<ElasticNet> {
    ElasticNet::new(c.lambda.unwrap_or(0.0), c.eta.unwrap_or(0.5))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

pub fn train(c: &RunConfig) -> Result<()> {
    let output = required(&c.output, "output")?;
    let d = load_data(c, required(&c.data, "data")?)?;
    let (model, log) = match c.model.unwrap_or(ModelKind::Boosted) {
        ModelKind::Linear => (AnyModel::Linear(fit_linear(&d, c.gamma.unwrap_or(1.0), enet(c)?)?), None),
        ModelKind::Boosted => {
            let (m, log) = fit_boosted_with_log(&d, &c.boost_config(d.task())?)?;
            (AnyModel::Boosted(m), Some(log))
        }
    };
    write_text(output, &model.to_json()?)?;
    if let Some(path) = &c.log {
        match log {
            Some(log) => write_atomic(path, |w| {
                writeln!(w, "round,loss")?;
                for (round, loss) in log.losses.iter().enumerate() {
                    writeln!(w, "{round},{loss}")?;
                }
                Ok(())
            })?,
            None => eprintln!("warning: no per-round log for linear models; '{}' not written", path.display()),
        }
    }
    Ok(())
}

pub fn predict(c: &RunConfig) -> Result<()> {
    let model = load_model(required(&c.model_file, "model_file")?)?;
    let x = read_features(required(&c.data, "data")?, model.feature_names())?;
    let scores = model.predict_scores(&x)?;
    let response = model.predict_response(&x)?;
    write_atomic(required(&c.output, "output")?, |w| {
        writeln!(w, "score,prediction")?;
        for (s, r) in scores.iter().zip(&response) {
            writeln!(w, "{s},{r}")?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct EnvironmentScore {
    environment: String,
    value: f64,
    n: usize,
}

#[derive(Serialize)]
struct Evaluation {
    metric: Metric,
    value: f64,
    n: usize,
    environments: Vec<EnvironmentScore>,
}

pub fn evaluate(c: &RunConfig) -> Result<()> {
    let model = load_model(required(&c.model_file, "model_file")?)?;
    let d = load_data(c, required(&c.data, "data")?)?.with_feature_order(model.feature_names())?;
    let metric = c.metric.unwrap_or(Metric::default_for(d.task()));
    let overall = evaluate_model(&model, &d, metric)?;
    let mut environments = Vec::new();
    if let Some(levels) = d.anchor().levels() {
        if levels.len() > 1 {
            for level in levels {
                let (_, part) = d.split_by_environment(level)?;
                let r = evaluate_model(&model, &part, metric)?;
                environments.push(EnvironmentScore {
                    environment: level.clone(),
                    value: r.value,
                    n: r.n,
                });
            }
        }
    }
    let report = to_json(&Evaluation {
        metric,
        value: overall.value,
        n: overall.n,
        environments,
    })?;
    match &c.output {
        Some(path) => write_text(path, &report),
        None => {
            println!("{report}");
            Ok(())
        }
    }
}

pub fn cv(c: &RunConfig) -> Result<()> {
    let d = load_data(c, required(&c.data, "data")?)?;
    let grid = c.grid();
    let kind = c.model.unwrap_or(ModelKind::Boosted);
    let enet = enet(c)?;
    let boost = c.boost_config(d.task())?;
    let trainer = move |train: &Dataset, gamma: f64| -> Result<Box<dyn Predictor>> {
        Ok(match kind {
            ModelKind::Linear => Box::new(fit_linear(train, gamma, enet)?),
            ModelKind::Boosted => {
                let config = anchorboost::BoostConfig { gamma, ..boost.clone() };
                Box::new(fit_boosted(train, &config)?)
            }
        })
    };
    let selection = loeo_select_gamma(&d, &grid.gamma_grid, &trainer as &Trainer)?;
    if let Some(path) = &c.output {
        write_atomic(path, |w| write_score_table(&selection.table, w))?;
    }
    println!("{}", selection.gamma);
    Ok(())
}

fn load_sources(c: &RunConfig) -> Result<Vec<AnyModel>> {
    let paths = required(&c.sources, "sources")?;
    if paths.is_empty() {
        return Err(Error::Config("missing required setting 'sources'".into()));
    }
    paths.iter().map(|p| load_model(p)).collect()
}

pub fn refit(c: &RunConfig) -> Result<()> {
    let output = required(&c.output, "output")?;
    let sources = load_sources(c)?;
    let target = load_data(c, required(&c.data, "data")?)?.with_feature_order(sources[0].feature_names())?;
    let forced = match (&sources[0], c.decay_rate, c.alpha) {
        (_, Some(_), Some(_)) => return Err(Error::Config("give either decay_rate or alpha, not both".into())),
        (AnyModel::Boosted(_), None, Some(_)) => {
            return Err(Error::Config("alpha applies to linear sources; use decay_rate".into()))
        }
        (AnyModel::Linear(_), Some(_), None) => {
            return Err(Error::Config("decay_rate applies to boosted sources; use alpha".into()))
        }
        (_, dr, alpha) => dr.or(alpha),
    };
    let refit = match forced {
        Some(param) => {
            if sources.len() != 1 {
                return Err(Error::Config("a fixed refit parameter needs exactly one source model".into()));
            }
            refit_model(&sources[0], &target, param)?
        }
        None => {
            let sel = kfold_refit_select(&sources, &target, &c.grid(), c.folds(), c.seed())?;
            if let Some(path) = &c.table {
                write_atomic(path, |w| {
                    writeln!(w, "source,gamma,parameter,value")?;
                    for r in &sel.table {
                        writeln!(w, "{},{},{},{}", r.source, r.gamma, r.parameter, r.value)?;
                    }
                    Ok(())
                })?;
            }
            let name = match sel.parameter_kind {
                RefitParameter::DecayRate => "decay_rate",
                RefitParameter::PriorWidth => "alpha",
            };
            println!("gamma={} {name}={} score={}", sel.gamma, sel.parameter, sel.score);
            refit_model(&sources[sel.source], &target, sel.parameter)?
        }
    };
    write_text(output, &refit.to_json()?)
}

pub fn regimes(c: &RunConfig) -> Result<()> {
    let points = match &c.curves {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
            read_curve_csv(file).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        }
        None => compute_curves(c)?,
    };
    if let Some(path) = &c.curves_out {
        write_atomic(path, |w| write_curve_csv(&points, w))?;
    }
    let curves = RegimeCurves::from_points(&points)?;
    let transitions = transition_points(&curves, c.tolerance.unwrap_or_default())?;
    let json = transitions.to_json()?;
    match &c.output {
        Some(path) => write_text(path, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn compute_curves(c: &RunConfig) -> Result<Vec<anchorboost::regimes::CurvePoint>> {
    let sources = load_sources(c)?;
    let names = sources[0].feature_names().to_vec();
    let pool = load_data(c, required(&c.pool, "pool")?)?.with_feature_order(&names)?;
    let test = load_data(c, required(&c.test, "test")?)?.with_feature_order(&names)?;
    let metric = c.metric.unwrap_or(Metric::default_for(pool.task()));
    let sizes = match &c.sizes {
        Some(s) => s.clone(),
        None => default_sizes(sampling_units(&pool).0),
    };
    let seeds: Vec<u64> = (0..c.seeds.unwrap_or(20)).collect();
    let grid = c.grid();
    let spec = c.target_only.clone().unwrap_or_default();
    spec.validate()?;
    let folds = c.folds();
    let trainer = move |d: &Dataset, seed: u64| spec.fit(d, folds, seed);
    let runners = [
        StrategyRunner::SourceOnly(&sources[0]),
        StrategyRunner::Refit {
            sources: &sources,
            grid: &grid,
            folds,
        },
        StrategyRunner::TargetOnly(&trainer),
    ];
    let mut points = Vec::new();
    for (i, runner) in runners.iter().enumerate() {
        let out = subsample_curve(&pool, &test, &sizes, &seeds, runner, metric)?;
        if i == 0 {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
        }
        points.extend(out.points);
    }
    Ok(points)
}

pub fn simulate(c: &RunConfig) -> Result<()> {
    let output = required(&c.output, "output")?;
    let mut scm = match &c.scm {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            AnchorScm::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => AnchorScm::canonical(),
    };
    if let Some(seed) = c.seed {
        scm = scm.with_seed(seed);
    }
    if let Some(task) = c.task {
        scm = scm.with_task(task);
    }
    let n = c.n.unwrap_or(1000);
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let mut d = scm.generate_stream(n, c.shift_scale.unwrap_or(1.0), c.stream.unwrap_or(0))?;
    if let Some(label) = &c.env_label {
        d = d.with_single_environment(label);
    }
    write_atomic(output, |w| d.write_csv(w))?;
    if let Some(path) = &c.scm_out {
        write_text(path, &scm.to_json()?)?;
    }
    Ok(())
}

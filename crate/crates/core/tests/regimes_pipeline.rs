use anchorboost::regimes::{
    subsample_curve, transition_points, RegimeCurves, Strategy, StrategyRunner, TargetOnlySpec, Tolerance,
};
use anchorboost::selection::{CvGrid, Metric};
use anchorboost::{fit_linear_anchor, AnchorScm, AnyModel, Dataset, ElasticNet};

fn target_data(n: usize, seed: u64) -> Dataset {
    AnchorScm::canonical().with_seed(seed).generate(n, 3.0).unwrap().with_single_environment("target")
}

fn source_model(gamma: f64) -> AnyModel {
    let d = AnchorScm::canonical().generate(3000, 1.0).unwrap();
    AnyModel::Linear(fit_linear_anchor(&d, gamma, ElasticNet::NONE).unwrap())
}

#[test]
fn source_only_ignores_the_subsample() {
    let (pool, test) = (target_data(200, 1), target_data(500, 2));
    let src = source_model(1.0);
    let out = subsample_curve(&pool, &test, &[25, 50], &[0, 1], &StrategyRunner::SourceOnly(&src), Metric::Mse).unwrap();
    assert_eq!(out.points.len(), 4);
    assert!(out.points.iter().all(|p| p.value == out.points[0].value));
}

#[test]
fn oversized_requests_are_skipped_with_a_warning() {
    let (pool, test) = (target_data(40, 1), target_data(100, 2));
    let src = source_model(1.0);
    let out = subsample_curve(&pool, &test, &[25, 50], &[0], &StrategyRunner::SourceOnly(&src), Metric::Mse).unwrap();
    assert_eq!(out.points.len(), 1);
    assert_eq!(out.warnings.len(), 1);
}

#[test]
fn target_only_learning_curve_improves_and_is_reproducible() {
    let (pool, test) = (target_data(1600, 3), target_data(2000, 4));
    let spec = TargetOnlySpec::default();
    let trainer = move |d: &Dataset, seed: u64| spec.fit(d, 5, seed);
    let runner = StrategyRunner::TargetOnly(&trainer);
    let seeds: Vec<u64> = (0..5).collect();
    let out = subsample_curve(&pool, &test, &[25, 1600], &seeds, &runner, Metric::Mse).unwrap();
    let again = subsample_curve(&pool, &test, &[25, 1600], &seeds, &runner, Metric::Mse).unwrap();
    assert_eq!(out, again);
    let curves = RegimeCurves::from_points(&out.points).unwrap();
    let c = curves.get(Strategy::TargetOnly).unwrap();
    assert!(c.median[1] <= c.median[0], "{:?}", c.median);
}

#[test]
fn three_strategy_pipeline_yields_transitions() {
    let (pool, test) = (target_data(400, 5), target_data(2000, 6));
    let sources = [source_model(1.0), source_model(8.0)];
    let grid = CvGrid::default();
    let spec = TargetOnlySpec::default();
    let trainer = move |d: &Dataset, seed: u64| spec.fit(d, 5, seed);
    let sizes = [25, 50, 100, 200, 400];
    let seeds = [0, 1, 2];
    let mut points = Vec::new();
    for runner in [
        StrategyRunner::SourceOnly(&sources[1]),
        StrategyRunner::Refit { sources: &sources, grid: &grid, folds: 5 },
        StrategyRunner::TargetOnly(&trainer),
    ] {
        points.extend(subsample_curve(&pool, &test, &sizes, &seeds, &runner, Metric::Mse).unwrap().points);
    }
    let curves = RegimeCurves::from_points(&points).unwrap();
    let t = transition_points(&curves, Tolerance::default()).unwrap();
    if let (Some(c), Some(s)) = (t.circle, t.square) {
        assert!(c.n <= s.n);
    }
    assert!(t.to_json().unwrap().contains("\"tolerance\""));
}

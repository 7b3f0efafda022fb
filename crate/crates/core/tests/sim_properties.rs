mod common;

use anchorboost::selection::{evaluate_model, Metric};
use anchorboost::sim::worst_case_risk;
use anchorboost::{fit_linear_anchor, AnchorScm, ElasticNet};
use common::*;
use nalgebra::DVector;

#[test]
fn tsls_recovers_causal_effect_without_confounding() {
    let scm = AnchorScm::just_identified(false).with_seed(17);
    let d = scm.generate(100_000, 1.0).unwrap();
    let codes: Vec<usize> = (0..d.n()).map(|i| i % 3).collect();
    let z = one_hot(&codes);
    let (c, b) = tsls(d.features(), d.outcome(), &z);
    // asymptotic standard errors σ² (X̂ᵀX̂)⁻¹
    let n = d.n();
    let x = d.features();
    let design = nalgebra::DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let fitted = dense_projection_of_columns(&z, &design);
    let theta = DVector::from_vec(vec![c, b[0], b[1]]);
    let resid = DVector::from_column_slice(d.outcome()) - &design * &theta;
    let sigma2 = resid.norm_squared() / (n - 3) as f64;
    let cov = (fitted.transpose() * &fitted).try_inverse().unwrap() * sigma2;
    for j in 0..2 {
        let se = cov[(j + 1, j + 1)].sqrt();
        assert!((b[j] - scm.causal_effect[j]).abs() < 3.0 * se, "coef {j}: {} vs {} (se {se})", b[j], scm.causal_effect[j]);
    }
}

/// `Z (ZᵀZ)⁻¹ Zᵀ M` without forming the n × n projection.
fn dense_projection_of_columns(z: &nalgebra::DMatrix<f64>, m: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let coef = (z.transpose() * z).lu().solve(&(z.transpose() * m)).unwrap();
    z * coef
}

#[test]
fn generation_is_deterministic() {
    let scm = AnchorScm::canonical().with_seed(3);
    let mut a = Vec::new();
    let mut b = Vec::new();
    scm.generate(50, 2.0).unwrap().write_csv(&mut a).unwrap();
    scm.generate(50, 2.0).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let round = AnchorScm::from_json(&scm.to_json().unwrap()).unwrap();
    assert_eq!(round, scm);
}

#[test]
fn unit_scale_risk_is_plain_test_error() {
    let scm = AnchorScm::canonical();
    let m = fit_linear_anchor(&scm.generate(500, 1.0).unwrap(), 1.0, ElasticNet::NONE).unwrap();
    let profile = worst_case_risk(&m, &scm, &[1.0], 1000).unwrap();
    let test = scm.generate_stream(1000, 1.0, 1000).unwrap();
    assert_eq!(profile.worst, evaluate_model(&m, &test, Metric::Mse).unwrap().value);
}

#[test]
fn least_squares_risk_grows_with_shift() {
    let scm = AnchorScm::canonical();
    let m = fit_linear_anchor(&scm.generate(5000, 1.0).unwrap(), 1.0, ElasticNet::NONE).unwrap();
    let profile = worst_case_risk(&m, &scm, &[1.0, 2.0, 4.0, 8.0], 20_000).unwrap();
    for w in profile.risks.windows(2) {
        assert!(w[1] > w[0], "{:?}", profile.risks);
    }
}

#[test]
fn anchor_regression_lowers_worst_case_risk() {
    let scales = [1.0, 2.0, 4.0, 8.0];
    let mut diffs: Vec<f64> = (0..20)
        .map(|seed| {
            let scm = AnchorScm::canonical().with_seed(seed);
            let d = scm.generate(1500, 1.0).unwrap();
            let risk = |g| {
                let m = fit_linear_anchor(&d, g, ElasticNet::NONE).unwrap();
                worst_case_risk(&m, &scm, &scales, 3000).unwrap().worst
            };
            risk(16.0) - risk(1.0)
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    assert!(diffs[10] < 0.0);
}

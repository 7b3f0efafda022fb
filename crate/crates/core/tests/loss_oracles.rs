mod common;

use anchorboost::loss::{probit_loss, regression_loss, single_observation_loss_curve, CurveLink};
use anchorboost::Projection;
use common::*;
use rand::Rng;

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn labels(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

#[test]
fn probit_gradient_matches_finite_differences() {
    let mut rng = rng(11);
    for inst in 0..50 {
        let n = rng.random_range(8..40);
        let envs = 2 + inst % 3;
        let gamma = [1.0, 4.0, 16.0][inst % 3];
        let codes = env_codes(&mut rng, n, envs);
        let f: Vec<f64> = normal_vec(&mut rng, n);
        let y = labels(&mut rng, n);
        let p = dense_projection(&codes);
        let proj = Projection::group_mean(&codes, envs);
        let eval = probit_loss(&f, &y, gamma, &proj).unwrap();
        let fd = central_gradient(|s| dense_probit_loss(s, &y, gamma, &p), &f, 1e-5);
        assert!(max_rel(&eval.gradient, &fd) < 1e-5, "instance {inst}");
        assert!((eval.value - dense_probit_loss(&f, &y, gamma, &p)).abs() < 1e-9 * eval.value.abs().max(1.0));
    }
}

#[test]
fn probit_hessian_vector_matches_gradient_differences() {
    let mut rng = rng(12);
    for inst in 0..30 {
        let n = rng.random_range(8..30);
        let envs = 2 + inst % 3;
        let gamma = [1.0, 4.0, 16.0][inst % 3];
        let codes = env_codes(&mut rng, n, envs);
        let f = normal_vec(&mut rng, n);
        let v = normal_vec(&mut rng, n);
        let y = labels(&mut rng, n);
        let proj = Projection::group_mean(&codes, envs);
        let eval = probit_loss(&f, &y, gamma, &proj).unwrap();
        let hv = eval.hessian.hessian_vector(&proj, &v).unwrap();
        let h = 1e-5;
        let shifted = |sign: f64| {
            let s: Vec<f64> = f.iter().zip(&v).map(|(f, v)| f + sign * h * v).collect();
            probit_loss(&s, &y, gamma, &proj).unwrap().gradient
        };
        let (up, down) = (shifted(1.0), shifted(-1.0));
        let fd: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        assert!(max_rel(&hv, &fd) < 1e-5, "instance {inst}");
    }
}

#[test]
fn regression_gradient_and_hessian_vector() {
    let mut rng = rng(13);
    for inst in 0..50 {
        let n = rng.random_range(5..40);
        let envs = 2 + inst % 3;
        let gamma = [1.0, 4.0, 16.0][inst % 3];
        let codes = env_codes(&mut rng, n, envs);
        let f = normal_vec(&mut rng, n);
        let y = normal_vec(&mut rng, n);
        let v = normal_vec(&mut rng, n);
        let p = dense_projection(&codes);
        let proj = Projection::group_mean(&codes, envs);
        let eval = regression_loss(&f, &y, gamma, &proj).unwrap();
        let fd = central_gradient(|s| dense_regression_loss(s, &y, gamma, &p), &f, 1e-5);
        assert!(max_rel(&eval.gradient, &fd) < 1e-5);
        let hv = eval.hessian.hessian_vector(&proj, &v).unwrap();
        let h = nalgebra::DMatrix::identity(n, n) + &p * (gamma - 1.0);
        let dense_hv = h * nalgebra::DVector::from_vec(v.clone());
        assert!(max_rel(&hv, dense_hv.as_slice()) < 1e-12);
    }
}

fn second_differences(values: &[f64], h: f64) -> Vec<f64> {
    values.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]) / (h * h)).collect()
}

#[test]
fn probit_single_observation_is_convex_logistic_is_not() {
    let h = 0.01;
    let grid: Vec<f64> = (0..=800).map(|i| -4.0 + i as f64 * h).collect();
    for gamma in [1.0, 2.0, 4.0] {
        let curve = single_observation_loss_curve(CurveLink::Probit, gamma, 1.0, &grid).unwrap();
        let min = second_differences(&curve, h).into_iter().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8, "gamma {gamma}: {min}");
    }
    let logistic = single_observation_loss_curve(CurveLink::Logistic, 4.0, 1.0, &grid).unwrap();
    let min = second_differences(&logistic, h).into_iter().fold(f64::INFINITY, f64::min);
    assert!(min < -1e-3, "{min}");
}

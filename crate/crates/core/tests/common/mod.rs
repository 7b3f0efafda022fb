//! Independent dense reference implementations used as test oracles.
#![allow(dead_code)]

use anchorboost::boosting::binning::FeatureBins;
use anchorboost::{AnchorSpec, Dataset, Task};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Environment codes with every environment present.
pub fn env_codes(rng: &mut ChaCha8Rng, n: usize, envs: usize) -> Vec<usize> {
    (0..n).map(|i| if i < envs { i } else { rng.random_range(0..envs) }).collect()
}

pub fn env_labels(codes: &[usize]) -> Vec<String> {
    codes.iter().map(|c| format!("e{c}")).collect()
}

pub fn dataset(x: DMatrix<f64>, y: Vec<f64>, codes: &[usize], task: Task) -> Dataset {
    let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    Dataset::new(x, y, AnchorSpec::discrete("env", &env_labels(codes)), names, task).unwrap()
}

/// Explicit projection matrix `Z (ZᵀZ)⁺ Zᵀ`.
pub fn dense_projection_of(z: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = z.transpose() * z;
    let pinv = gram.pseudo_inverse(1e-12).unwrap();
    z * pinv * z.transpose()
}

pub fn one_hot(codes: &[usize]) -> DMatrix<f64> {
    let k = codes.iter().max().map_or(0, |m| m + 1);
    DMatrix::from_fn(codes.len(), k, |i, j| if codes[i] == j { 1.0 } else { 0.0 })
}

pub fn dense_projection(codes: &[usize]) -> DMatrix<f64> {
    dense_projection_of(&one_hot(codes))
}

/// `½‖y − f‖² + ½(γ − 1)‖P(y − f)‖²`.
pub fn dense_regression_loss(f: &[f64], y: &[f64], gamma: f64, p: &DMatrix<f64>) -> f64 {
    let r = DVector::from_iterator(y.len(), y.iter().zip(f).map(|(y, f)| y - f));
    0.5 * r.norm_squared() + 0.5 * (gamma - 1.0) * (p * &r).norm_squared()
}

/// `−Σ log Φ(y f) + ½(γ − 1)‖P r‖²` with `r = −y φ(f) / Φ(y f)`.
pub fn dense_probit_loss(f: &[f64], y: &[f64], gamma: f64, p: &DMatrix<f64>) -> f64 {
    let z = Normal::standard();
    let mut nll = 0.0;
    let r = DVector::from_iterator(
        y.len(),
        y.iter().zip(f).map(|(&y, &f)| {
            let cdf = z.cdf(y * f);
            nll -= cdf.ln();
            -y * z.pdf(f) / cdf
        }),
    );
    nll + 0.5 * (gamma - 1.0) * (p * &r).norm_squared()
}

pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Newton iterations with finite-difference derivatives only.
pub fn minimize_numerically(f: impl Fn(&[f64]) -> f64, k: usize) -> Vec<f64> {
    let mut beta = vec![0.0; k];
    for _ in 0..100 {
        let g = central_gradient(&f, &beta, 1e-4);
        let h = 1e-3;
        let hess = DMatrix::from_fn(k, k, |i, j| {
            let eval = |di: f64, dj: f64| {
                let mut b = beta.clone();
                b[i] += di;
                b[j] += dj;
                f(&b)
            };
            (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h)
        });
        let step = hess.lu().solve(&DVector::from_vec(g)).expect("oracle Hessian singular");
        for (b, s) in beta.iter_mut().zip(step.iter()) {
            *b -= s;
        }
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta
}

/// Minimizer of `‖y − c − Xb‖² + (γ − 1)‖P(y − c − Xb)‖²` from the normal
/// equations; returns `(c, b)`.
pub fn dense_anchor_solution(x: &DMatrix<f64>, y: &[f64], gamma: f64, p: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let n = x.nrows();
    let design = DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let h = DMatrix::identity(n, n) + p * (gamma - 1.0);
    let lhs = design.transpose() * &h * &design;
    let rhs = design.transpose() * &h * DVector::from_column_slice(y);
    let theta = lhs.lu().solve(&rhs).unwrap();
    (theta[0], theta.iter().skip(1).copied().collect())
}

/// Two-stage least squares with instruments `z` and an intercept in the
/// second stage; returns `(c, b)`.
pub fn tsls(x: &DMatrix<f64>, y: &[f64], z: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let n = x.nrows();
    let design = DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let zz = z.transpose() * z;
    let first_stage = zz.lu().solve(&(z.transpose() * &design)).unwrap();
    let fitted = z * first_stage;
    let theta = (fitted.transpose() * &design)
        .lu()
        .solve(&(fitted.transpose() * DVector::from_column_slice(y)))
        .unwrap();
    (theta[0], theta.iter().skip(1).copied().collect())
}

pub struct ReferenceTreeParams {
    pub max_depth: usize,
    pub min_gain: f64,
    pub min_samples_leaf: usize,
}

/// Plain second-order (γ = 1, squared error) gradient boosting: fresh
/// per-node sums, no histogram subtraction, leaf value = mean residual.
/// Returns the training scores after every round.
pub fn reference_boosting_path(
    x: &DMatrix<f64>,
    y: &[f64],
    max_bins: usize,
    rounds: usize,
    lr: f64,
    params: &ReferenceTreeParams,
) -> Vec<Vec<f64>> {
    let bins = FeatureBins::fit(x, max_bins);
    let binned = bins.transform(x);
    let n = y.len();
    let mut f = vec![y.iter().sum::<f64>() / n as f64; n];
    let mut path = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let target: Vec<f64> = y.iter().zip(&f).map(|(y, f)| y - f).collect();
        let mut level = vec![(0..n).collect::<Vec<usize>>()];
        let mut leaves: Vec<Vec<usize>> = Vec::new();
        for depth in 0..=params.max_depth {
            let mut next = Vec::new();
            for rows in level {
                let count = rows.len();
                let mut best: Option<(usize, usize, f64)> = None;
                if depth < params.max_depth && count >= 2 * params.min_samples_leaf.max(1) {
                    let total: f64 = rows.iter().map(|&r| target[r]).sum();
                    for j in 0..x.ncols() {
                        let nb = bins.num_bins(j);
                        let mut sums = vec![0.0; nb];
                        let mut counts = vec![0usize; nb];
                        for &r in &rows {
                            let b = binned.get(r, j) as usize;
                            sums[b] += target[r];
                            counts[b] += 1;
                        }
                        let (mut sl, mut cl) = (0.0, 0);
                        for b in 0..nb.saturating_sub(1) {
                            sl += sums[b];
                            cl += counts[b];
                            let cr = count - cl;
                            if cl < params.min_samples_leaf || cr < params.min_samples_leaf {
                                continue;
                            }
                            let sr = total - sl;
                            let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - total * total / count as f64;
                            if best.is_none_or(|(_, _, g)| gain > g) {
                                best = Some((j, b, gain));
                            }
                        }
                    }
                }
                match best {
                    Some((j, b, gain)) if gain > 0.0 && gain >= params.min_gain => {
                        let (l, r): (Vec<usize>, Vec<usize>) =
                            rows.iter().partition(|&&i| (binned.get(i, j) as usize) <= b);
                        next.push(l);
                        next.push(r);
                    }
                    _ => leaves.push(rows),
                }
            }
            level = next;
        }
        for rows in &leaves {
            let mean = rows.iter().map(|&r| target[r]).sum::<f64>() / rows.len() as f64;
            for &r in rows {
                f[r] += lr * mean;
            }
        }
        path.push(f.clone());
    }
    path
}

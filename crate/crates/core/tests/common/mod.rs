//! Independent oracles shared by the integration suites. Nothing here calls
//! into the library's numerical routines; it only builds and reads datasets.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use cwsl::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sigma(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Gaussian features followed by a constant bias column, labels drawn from a
/// logistic model with coefficients `truth` (bias last). Redraws until both
/// classes are present.
pub fn logistic_data(n: usize, truth: &[f64], rng: &mut ChaCha8Rng) -> Dataset {
    let d = truth.len();
    loop {
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x: Vec<f64> = (0..d - 1)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect();
            x.push(1.0);
            let s: f64 = x.iter().zip(truth).map(|(a, b)| a * b).sum();
            labels.push(u8::from(rng.random::<f64>() < sigma(s)));
            rows.push(x);
        }
        if labels.contains(&0) && labels.contains(&1) {
            return Dataset::from_rows(&rows, labels).unwrap();
        }
    }
}

fn rows(data: &Dataset) -> Vec<DVector<f64>> {
    (0..data.len())
        .map(|i| DVector::from_column_slice(data.row(i)))
        .collect()
}

pub fn weighted_loss(data: &Dataset, w: &[f64], theta: &DVector<f64>) -> f64 {
    let n = data.len() as f64;
    rows(data)
        .iter()
        .zip(data.labels())
        .zip(w)
        .map(|((x, &y), wi)| {
            let p = sigma(x.dot(theta));
            let nll = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
            wi * nll
        })
        .sum::<f64>()
        / n
}

pub fn dense_gradient(data: &Dataset, w: &[f64], theta: &DVector<f64>) -> DVector<f64> {
    let n = data.len() as f64;
    let mut g = DVector::zeros(data.n_features());
    for ((x, &y), wi) in rows(data).iter().zip(data.labels()).zip(w) {
        g += x * (wi * (sigma(x.dot(theta)) - f64::from(y)) / n);
    }
    g
}

pub fn dense_hessian(data: &Dataset, w: &[f64], theta: &DVector<f64>) -> DMatrix<f64> {
    let n = data.len() as f64;
    let d = data.n_features();
    let mut h = DMatrix::zeros(d, d);
    for (x, wi) in rows(data).iter().zip(w) {
        let p = sigma(x.dot(theta));
        h += x * x.transpose() * (wi * p * (1.0 - p) / n);
    }
    h
}

/// Damped Newton on the weighted logistic loss until the gradient norm is at
/// most `1e-12`.
pub fn newton_inner(data: &Dataset, w: &[f64]) -> DVector<f64> {
    let mut theta = DVector::zeros(data.n_features());
    for _ in 0..200 {
        let g = dense_gradient(data, w, &theta);
        if g.norm() <= 1e-12 {
            return theta;
        }
        let step = dense_hessian(data, w, &theta)
            .cholesky()
            .expect("inner Hessian positive definite")
            .solve(&g);
        let base = weighted_loss(data, w, &theta);
        let mut t = 1.0;
        while weighted_loss(data, w, &(&theta - &step * t)) > base && t > 1e-12 {
            t *= 0.5;
        }
        theta -= step * t;
    }
    let g = dense_gradient(data, w, &theta);
    assert!(
        g.norm() <= 1e-10,
        "inner solve stalled at gradient norm {}",
        g.norm()
    );
    theta
}

/// Pairwise squared surrogate by enumerating every positive/negative pair.
pub fn pair_surrogate(validation: &Dataset, theta: &[f64]) -> f64 {
    let score = |x: &[f64]| x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    let (mut total, mut pairs) = (0.0, 0usize);
    for (a, ya) in validation.iter() {
        for (b, yb) in validation.iter() {
            if ya == 1 && yb == 0 {
                total += (1.0 - (score(a) - score(b))).powi(2);
                pairs += 1;
            }
        }
    }
    total / pairs as f64
}

/// Mean and second moment of positive-minus-negative differences by double sum.
pub fn pair_moments(validation: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = validation.n_features();
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut pairs = 0usize;
    for (a, ya) in validation.iter() {
        for (b, yb) in validation.iter() {
            if ya == 1 && yb == 0 {
                let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
                for r in 0..d {
                    mu[r] += diff[r];
                    for c in 0..d {
                        sigma[r * d + c] += diff[r] * diff[c];
                    }
                }
                pairs += 1;
            }
        }
    }
    let m = pairs as f64;
    mu.iter_mut().for_each(|v| *v /= m);
    sigma.iter_mut().for_each(|v| *v /= m);
    (mu, sigma)
}

/// `∂L(θ*(w))/∂w` by retraining the inner problem at `w ± δ e_j`.
pub fn retrain_gradient(train: &Dataset, validation: &Dataset, w: &[f64], delta: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[j] += delta;
            minus[j] -= delta;
            let lp = pair_surrogate(validation, newton_inner(train, &plus).as_slice());
            let lm = pair_surrogate(validation, newton_inner(train, &minus).as_slice());
            (lp - lm) / (2.0 * delta)
        })
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Largest relative error of `approx` against `exact` over the `k` entries of
/// `exact` with the largest magnitude.
pub fn top_k_relative_error(approx: &[f64], exact: &[f64], k: usize) -> f64 {
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| exact[b].abs().total_cmp(&exact[a].abs()));
    order
        .iter()
        .take(k)
        .map(|&i| (approx[i] - exact[i]).abs() / exact[i].abs())
        .fold(0.0, f64::max)
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwsl"))
        .args(args)
        .output()
        .expect("spawn cwsl")
}

pub fn run_ok(args: &[&str]) -> HashMap<String, String> {
    let out = run_cli(args);
    assert!(
        out.status.success(),
        "cwsl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    key_values(&String::from_utf8(out.stdout).unwrap())
}

pub fn key_values(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn value(kv: &HashMap<String, String>, key: &str) -> f64 {
    kv.get(key)
        .unwrap_or_else(|| panic!("missing `{key}` in {kv:?}"))
        .parse()
        .unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

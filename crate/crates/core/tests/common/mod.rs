#![allow(dead_code)]

use foodweb::model::{FoodwebModel, MatrixInput, ModelConfig, ResponseConfig, ResponseKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[allow(clippy::too_many_arguments)]
pub fn config(
    supply: Vec<f64>,
    dilution: Vec<f64>,
    mu: Vec<f64>,
    gamma: Vec<f64>,
    content: Vec<Vec<f64>>,
    r: Vec<f64>,
    k: Vec<Vec<f64>>,
) -> ModelConfig {
    ModelConfig {
        m: supply.len(),
        species: mu.len(),
        supply,
        dilution,
        mu,
        gamma,
        content: MatrixInput::Rows(content),
        response: ResponseConfig {
            kind: ResponseKind::MonodLiebig,
            r,
            k: MatrixInput::Rows(k),
        },
        allow_zero_c: false,
    }
}

/// S=10, D=c=r=K=gamma=1, mu=0.25.
pub fn scalar_model() -> FoodwebModel {
    config(
        vec![10.0],
        vec![1.0],
        vec![0.25],
        vec![1.0],
        vec![vec![1.0]],
        vec![1.0],
        vec![vec![1.0]],
    )
    .validate()
    .unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..n).map(|_| uniform(rng, lo, hi)).collect())
        .collect()
}

/// Random survivable model: every `mu_j` sits below `phi_j(S)`.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize, n: usize) -> FoodwebModel {
    random_model_gamma(rng, m, n, 0.5, 2.0)
}

/// As [`random_model`] with `gamma_j` log-uniform on `[lo, hi]`.
pub fn random_model_gamma(
    rng: &mut ChaCha8Rng,
    m: usize,
    n: usize,
    lo: f64,
    hi: f64,
) -> FoodwebModel {
    let supply: Vec<f64> = (0..m).map(|_| uniform(rng, 1.0, 10.0)).collect();
    let dilution = (0..m).map(|_| uniform(rng, 0.5, 2.0)).collect();
    let gamma = (0..n)
        .map(|_| uniform(rng, lo.ln(), hi.ln()).exp())
        .collect();
    let r: Vec<f64> = (0..n).map(|_| uniform(rng, 1.0, 2.0)).collect();
    let k = matrix(rng, m, n, 0.2, 2.0);
    let content = matrix(rng, m, n, 0.1, 1.0);
    let mu = (0..n)
        .map(|j| {
            let phi_s = (0..m)
                .map(|i| r[j] * supply[i] / (k[i][j] + supply[i]))
                .fold(f64::INFINITY, f64::min);
            uniform(rng, 0.0, 0.9) * phi_s
        })
        .collect();
    config(supply, dilution, mu, gamma, content, r, k)
        .validate()
        .unwrap()
}

pub fn random_sized_model(rng: &mut ChaCha8Rng, max_dim: usize) -> FoodwebModel {
    let m = rng.gen_range(1..=max_dim);
    let n = rng.gen_range(1..=max_dim);
    random_model(rng, m, n)
}

pub fn random_point(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| if b > a { rng.gen_range(a..=b) } else { a })
        .collect()
}

pub fn random_box_point(rng: &mut ChaCha8Rng, model: &FoodwebModel) -> Vec<f64> {
    random_point(rng, &vec![0.0; model.resources()], model.supply())
}

/// Random pair `a <= b` inside `[0, S]`.
pub fn random_ordered_pair(rng: &mut ChaCha8Rng, model: &FoodwebModel) -> (Vec<f64>, Vec<f64>) {
    let a = random_box_point(rng, model);
    let b = random_point(rng, &a, model.supply());
    (a, b)
}

/// Random initial data with `x0 >> 0`, `v0` in `[0, S]`.
pub fn random_initial(rng: &mut ChaCha8Rng, model: &FoodwebModel) -> (Vec<f64>, Vec<f64>) {
    let x0 = (0..model.species())
        .map(|_| uniform(rng, 0.01, 2.0))
        .collect();
    (x0, random_box_point(rng, model))
}

/// Scales every `gamma_j` so the certificate quantity equals `target`.
pub fn with_rho(model: &FoodwebModel, target: f64) -> FoodwebModel {
    let rho = foodweb::certificates::rho(model).unwrap().value;
    if rho == 0.0 {
        return model.clone();
    }
    model.with_gamma_scaled(rho / target).unwrap()
}

/// Root of an increasing `g` on `[lo, hi]` by plain bisection.
pub fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two resources, two species, `c = [[1, eps1], [eps1, 1]]`, `K = [[1, beta], [beta, 1]]`,
/// `mu = eps2`, `S_i = s`, `r = D = 1`, `gamma = 1 / a`.
pub fn mirror_model(s: f64, a: f64, beta: f64, eps1: f64, eps2: f64) -> FoodwebModel {
    let mut cfg = config(
        vec![s, s],
        vec![1.0, 1.0],
        vec![eps2, eps2],
        vec![1.0 / a, 1.0 / a],
        vec![vec![1.0, eps1], vec![eps1, 1.0]],
        vec![1.0, 1.0],
        vec![vec![1.0, beta], vec![beta, 1.0]],
    );
    cfg.allow_zero_c = eps1 == 0.0;
    cfg.validate().unwrap()
}

pub fn mirror_g(beta: f64, t: f64) -> f64 {
    t * t * ((t + 1.0 + beta).powi(2) - beta) / ((t + 1.0).powi(2) * (t + beta).powi(2))
}

/// Root of `s - t = a t^2 / (k + t)^2` on `(0, s)`.
pub fn mirror_root(s: f64, a: f64, k: f64) -> f64 {
    bisect(|t| t + a * t * t / ((k + t) * (k + t)) - s, 0.0, s)
}

#[derive(Debug, Clone, Copy)]
pub struct MirrorScan {
    pub beta: f64,
    pub v1: f64,
    pub v2: f64,
    pub margin: f64,
}

/// Walks `beta = 1.05, 1.10, ...` up to `beta_max` and returns the first
/// value whose off-diagonal point clears `v2 - beta v1 >= min_margin`.
pub fn mirror_scan(s: f64, a: f64, beta_max: f64, min_margin: f64) -> Option<MirrorScan> {
    let v1 = mirror_root(s, a, 1.0);
    (1..)
        .map(|k| 1.0 + 0.05 * k as f64)
        .take_while(|&beta| beta <= beta_max)
        .find_map(|beta| {
            let margin = (beta - 1.0) * a * (mirror_g(beta, v1) - s / a);
            let v2 = s - a * v1 * v1 / ((beta + v1) * (beta + v1));
            (margin >= min_margin).then_some(MirrorScan {
                beta,
                v1,
                v2,
                margin,
            })
        })
}

/// Cyclic 3x3 model whose trajectories oscillate for small `gamma`.
pub fn oscillating_model(gamma: f64) -> FoodwebModel {
    config(
        vec![10.0; 3],
        vec![0.25; 3],
        vec![0.25; 3],
        vec![gamma; 3],
        vec![
            vec![0.04, 0.07, 0.10],
            vec![0.10, 0.04, 0.07],
            vec![0.07, 0.10, 0.04],
        ],
        vec![1.0; 3],
        vec![
            vec![1.0, 0.3, 0.9],
            vec![0.9, 1.0, 0.3],
            vec![0.3, 0.9, 1.0],
        ],
    )
    .validate()
    .unwrap()
}

pub fn le_within(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x <= *y + tol)
}
